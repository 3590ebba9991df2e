//! The detection side: accumulates per-host traffic over evaluation
//! windows, classifies active hosts with the latest model at each window
//! boundary, and maintains the malicious-address list that drives packet
//! handling.
//!
//! Model swaps take effect at window boundaries only; a window is always
//! scored with a single model, whichever was current when it closed.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::net::Ipv4Addr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{encode, extract_features};
use crate::learn::{DetectionModel, LearnError};
use crate::types::{
    direction_of, remote_host_of, Direction, HostKey, Label, NetConfig, PacketRecord, TimeWindow,
};

/// What the gateway does with traffic from a listed host.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HandlingPolicy {
    /// Drop packets from listed hosts.
    FilterDrop,
    /// Forward them but record (and mirror) them as anomalous.
    #[default]
    RecordAndPass,
}

/// Verdict for one packet under the active policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PacketAction {
    Forward,
    Drop,
    Mirror,
}

/// When and how often an address was flagged malicious.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ListEntry {
    pub first_flagged: f64,
    pub last_flagged: f64,
    pub flag_count: u64,
}

/// Addresses ever classified malicious. Entries persist for the whole
/// replay; hosts keep being re-classified, so `flag_count` keeps growing
/// while the first/last timestamps bracket the activity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaliciousList {
    entries: BTreeMap<Ipv4Addr, ListEntry>,
}

impl MaliciousList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, addr: Ipv4Addr) -> bool {
        self.entries.contains_key(&addr)
    }

    pub fn get(&self, addr: Ipv4Addr) -> Option<&ListEntry> {
        self.entries.get(&addr)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ipv4Addr, &ListEntry)> {
        self.entries.iter()
    }

    fn flag(&mut self, addr: Ipv4Addr, t: f64) {
        self.entries
            .entry(addr)
            .and_modify(|e| {
                e.last_flagged = t;
                e.flag_count += 1;
            })
            .or_insert(ListEntry {
                first_flagged: t,
                last_flagged: t,
                flag_count: 1,
            });
    }

    /// CSV export: `addr,first_flagged,last_flagged,flag_count`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "addr,first_flagged,last_flagged,flag_count")?;
        for (addr, e) in &self.entries {
            writeln!(
                w,
                "{addr},{},{},{}",
                e.first_flagged, e.last_flagged, e.flag_count
            )?;
        }
        Ok(())
    }
}

/// Applies the handling policy to one packet: unlisted hosts are
/// forwarded; listed hosts are dropped or mirrored depending on policy.
/// Packets without a resolvable remote host are forwarded untouched.
pub fn apply_policy(
    p: &PacketRecord,
    cfg: &NetConfig,
    list: &MaliciousList,
    policy: HandlingPolicy,
) -> PacketAction {
    let Some(dir) = direction_of(p, cfg) else {
        return PacketAction::Forward;
    };
    let host = remote_host_of(p, dir);
    if !list.contains(host.0) {
        return PacketAction::Forward;
    }
    match policy {
        HandlingPolicy::FilterDrop => PacketAction::Drop,
        HandlingPolicy::RecordAndPass => PacketAction::Mirror,
    }
}

/// One classified host at a window boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HostVerdict {
    pub host: HostKey,
    pub label: Label,
    pub score: f64,
}

/// Result of closing an evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub enum Classification {
    /// No model was available yet; the window is skipped and counted.
    Deferred {
        active_hosts: usize,
    },
    Verdicts(Vec<HostVerdict>),
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Model(#[from] LearnError),
}

/// Per-host packet accumulators for the current evaluation window plus
/// the malicious list and verdict counters.
pub struct Gateway {
    cfg: NetConfig,
    eval_window: f64,
    policy: HandlingPolicy,
    model: Option<Arc<DetectionModel>>,
    active: BTreeMap<HostKey, (Vec<PacketRecord>, Vec<PacketRecord>)>,
    pub list: MaliciousList,
    /// Windows that closed with no model available.
    pub deferred_windows: u64,
    /// Packets ignored because neither or both endpoints were local.
    pub not_applicable: u64,
}

impl Gateway {
    pub fn new(cfg: NetConfig, eval_window: f64, policy: HandlingPolicy) -> Self {
        assert!(eval_window > 0.0, "evaluation window must be positive");
        Gateway {
            cfg,
            eval_window,
            policy,
            model: None,
            active: BTreeMap::new(),
            list: MaliciousList::new(),
            deferred_windows: 0,
            not_applicable: 0,
        }
    }

    pub fn model(&self) -> Option<&Arc<DetectionModel>> {
        self.model.as_ref()
    }

    pub fn active_hosts(&self) -> usize {
        self.active.len()
    }

    /// Folds one packet into the current window's per-host state. Listed
    /// hosts are still observed; policy and observation are orthogonal.
    pub fn observe(&mut self, p: &PacketRecord) {
        let Some(dir) = direction_of(p, &self.cfg) else {
            self.not_applicable += 1;
            return;
        };
        let host = remote_host_of(p, dir);
        let entry = self.active.entry(host).or_default();
        match dir {
            Direction::Incoming => entry.0.push(*p),
            Direction::Outgoing => entry.1.push(*p),
        }
    }

    /// The policy verdict for a packet, given the current list.
    pub fn apply_policy(&self, p: &PacketRecord) -> PacketAction {
        apply_policy(p, &self.cfg, &self.list, self.policy)
    }

    /// Installs a model. All classifications strictly after the swap use
    /// it; the current window is unaffected until it closes.
    pub fn swap_model(&mut self, model: Arc<DetectionModel>) -> Result<(), GatewayError> {
        if model.schema_hash != crate::featurize::schema_hash() {
            return Err(GatewayError::Model(LearnError::SchemaMismatch {
                model: model.schema_hash,
                vector: crate::featurize::schema_hash(),
            }));
        }
        self.model = Some(model);
        Ok(())
    }

    /// Closes the window ending at `t_end`: extracts features for every
    /// active host, classifies them with the current model, updates the
    /// malicious list, and resets the accumulators. With no model the
    /// window is deferred (and still reset).
    pub fn classify_active_hosts(&mut self, t_end: f64) -> Result<Classification, GatewayError> {
        let active = std::mem::take(&mut self.active);
        let Some(model) = self.model.clone() else {
            self.deferred_windows += 1;
            return Ok(Classification::Deferred {
                active_hosts: active.len(),
            });
        };
        let window = TimeWindow::new(t_end - self.eval_window, t_end);
        let mut verdicts = Vec::with_capacity(active.len());
        for (host, (incoming, outgoing)) in active {
            let features = extract_features(host, &incoming, &outgoing, window)
                .expect("active host has packets");
            let (label, score) = model
                .predict(&encode(&features))
                .map_err(GatewayError::Model)?;
            if label.is_malicious() {
                self.list.flag(host.0, t_end);
            }
            verdicts.push(HostVerdict { host, label, score });
        }
        Ok(Classification::Verdicts(verdicts))
    }
}
