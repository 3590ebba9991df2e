//! Per-host feature extraction over a time window.
//!
//! Traffic is grouped by remote host and split by direction. Nine features
//! describe each host: minimum packet interval, maximum and minimum packet
//! length for both directions, plus protocol, destination port and TTL
//! aggregated over incoming packets only. Categorical fields stay raw
//! numerics; no scaling is applied anywhere.
//!
//! Sentinels keep the vector total on sparse hosts: a direction with fewer
//! than two packets has no interval, so its minimum interval becomes the
//! window duration ("sends at most once per window"); a direction with no
//! packets gets zero lengths, and zero protocol/port/TTL on the incoming
//! side.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{label_hosts, TrafficStore};
use crate::types::{Direction, HostKey, Label, NetConfig, PacketRecord, TimeWindow};

/// Number of features in the fixed schema.
pub const FEATURE_DIM: usize = 9;

/// Canonical feature order. Encoded vectors follow this exactly, and the
/// schema hash is computed over it, so any reordering is detectable.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "in_min_interval",
    "in_max_len",
    "in_min_len",
    "in_proto",
    "in_dst_port",
    "in_ttl",
    "out_min_interval",
    "out_max_len",
    "out_min_len",
];

/// FNV-1a over the newline-joined feature names: stable across runs,
/// platforms and compiler versions.
pub fn schema_hash() -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut first = true;
    for name in FEATURE_NAMES {
        if !first {
            h ^= u64::from(b'\n');
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        first = false;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}

#[derive(Debug, Error, PartialEq)]
pub enum FeaturizeError {
    #[error("host has no packets in either direction")]
    EmptyHost,
    #[error("no labeled hosts in window [{start}, {end})")]
    EmptyWindow { start: f64, end: f64 },
}

/// The nine per-host features plus packet counts for one window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HostWindowFeatures {
    pub host: HostKey,
    pub window: TimeWindow,
    pub in_min_interval: f64,
    pub in_max_len: u32,
    pub in_min_len: u32,
    pub in_proto: u8,
    pub in_dst_port: u16,
    pub in_ttl: u8,
    pub out_min_interval: f64,
    pub out_max_len: u32,
    pub out_min_len: u32,
    pub in_count: u64,
    pub out_count: u64,
}

/// An encoded feature row in the fixed schema order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; FEATURE_DIM],
    pub schema_hash: u64,
}

/// One labeled training row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetRow {
    pub vector: FeatureVector,
    pub label: Label,
    pub host: HostKey,
}

/// Rows per class in a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub benign: u64,
    pub malicious: u64,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.benign + self.malicious
    }

    pub fn is_single_class(&self) -> bool {
        self.benign == 0 || self.malicious == 0
    }
}

/// Encoded features and labels for every labeled host active in a window.
/// One row per host, sorted by host address.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub rows: Vec<DatasetRow>,
    pub window: TimeWindow,
    pub class_counts: ClassCounts,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Most frequent value; ties broken by the smallest value. Stable under
/// packet duplication, which matters for retransmission-heavy traffic.
fn mode_smallest<T, I>(values: I) -> Option<T>
where
    T: Ord + Copy,
    I: IntoIterator<Item = T>,
{
    let mut counts: BTreeMap<T, u64> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    // BTreeMap iterates keys ascending, so `>` keeps the smallest on ties.
    let mut best: Option<(T, u64)> = None;
    for (v, n) in counts {
        if best.is_none_or(|(_, bn)| n > bn) {
            best = Some((v, n));
        }
    }
    best.map(|(v, _)| v)
}

/// Minimum gap between consecutive timestamps, or `None` with fewer than
/// two packets. Sorts internally, so input order is irrelevant.
fn min_interval(records: &[PacketRecord]) -> Option<f64> {
    if records.len() < 2 {
        return None;
    }
    let mut ts: Vec<f64> = records.iter().map(|r| r.ts).collect();
    ts.sort_by(f64::total_cmp);
    let mut best = f64::INFINITY;
    for pair in ts.windows(2) {
        let gap = pair[1] - pair[0];
        if gap < best {
            best = gap;
        }
    }
    Some(best)
}

/// Computes the feature set for one host from its per-direction packets.
/// All records must lie inside `window`; at least one direction must be
/// non-empty.
pub fn extract_features(
    host: HostKey,
    incoming: &[PacketRecord],
    outgoing: &[PacketRecord],
    window: TimeWindow,
) -> Result<HostWindowFeatures, FeaturizeError> {
    if incoming.is_empty() && outgoing.is_empty() {
        return Err(FeaturizeError::EmptyHost);
    }
    debug_assert!(incoming
        .iter()
        .chain(outgoing)
        .all(|r| window.contains(r.ts)));
    let duration = window.duration();

    let in_min_interval = min_interval(incoming).unwrap_or(duration);
    let out_min_interval = min_interval(outgoing).unwrap_or(duration);
    let in_max_len = incoming.iter().map(|r| r.length).max().unwrap_or(0);
    let in_min_len = incoming.iter().map(|r| r.length).min().unwrap_or(0);
    let out_max_len = outgoing.iter().map(|r| r.length).max().unwrap_or(0);
    let out_min_len = outgoing.iter().map(|r| r.length).min().unwrap_or(0);
    let in_proto = mode_smallest(incoming.iter().map(|r| r.proto)).unwrap_or(0);
    let in_dst_port = mode_smallest(incoming.iter().map(|r| r.dst_port)).unwrap_or(0);
    let in_ttl = mode_smallest(incoming.iter().map(|r| r.ttl)).unwrap_or(0);

    Ok(HostWindowFeatures {
        host,
        window,
        in_min_interval,
        in_max_len,
        in_min_len,
        in_proto,
        in_dst_port,
        in_ttl,
        out_min_interval,
        out_max_len,
        out_min_len,
        in_count: incoming.len() as u64,
        out_count: outgoing.len() as u64,
    })
}

/// Encodes features into the fixed schema order as raw numerics.
pub fn encode(f: &HostWindowFeatures) -> FeatureVector {
    FeatureVector {
        values: [
            f.in_min_interval,
            f.in_max_len as f64,
            f.in_min_len as f64,
            f.in_proto as f64,
            f.in_dst_port as f64,
            f.in_ttl as f64,
            f.out_min_interval,
            f.out_max_len as f64,
            f.out_min_len as f64,
        ],
        schema_hash: schema_hash(),
    }
}

/// Builds a labeled dataset from the store slice covered by `window`.
///
/// Hosts are labeled from that window's records only, so the labels always
/// describe the same traffic the features do. Hosts without ground truth
/// are excluded. Rows come out sorted by host address, which keeps
/// training deterministic.
pub fn build_dataset(
    store: &TrafficStore,
    window: TimeWindow,
    cfg: &NetConfig,
) -> Result<LabeledDataset, FeaturizeError> {
    let mut by_host: BTreeMap<HostKey, (Vec<PacketRecord>, Vec<PacketRecord>)> = BTreeMap::new();
    for stored in store.range(window) {
        let entry = by_host.entry(stored.host).or_default();
        match stored.direction {
            Direction::Incoming => entry.0.push(stored.record),
            Direction::Outgoing => entry.1.push(stored.record),
        }
    }
    let labels = label_hosts(store.range(window).map(|s| &s.record), cfg);
    let mut rows = Vec::new();
    let mut class_counts = ClassCounts::default();
    for (host, entry) in labels.iter() {
        let Some((incoming, outgoing)) = by_host.get(host) else {
            continue;
        };
        let features = extract_features(*host, incoming, outgoing, window)
            .expect("labeled host must have packets");
        match entry.label {
            Label::Benign => class_counts.benign += 1,
            Label::Malicious => class_counts.malicious += 1,
        }
        rows.push(DatasetRow {
            vector: encode(&features),
            label: entry.label,
            host: *host,
        });
    }
    if rows.is_empty() {
        return Err(FeaturizeError::EmptyWindow {
            start: window.start,
            end: window.end,
        });
    }
    Ok(LabeledDataset {
        rows,
        window,
        class_counts,
    })
}

/// Dumps a dataset as CSV: the nine schema columns plus the label.
pub fn write_dataset_csv<W: Write>(ds: &LabeledDataset, mut w: W) -> io::Result<()> {
    writeln!(w, "{},label", FEATURE_NAMES.join(","))?;
    for row in &ds.rows {
        for v in row.vector.values {
            write!(w, "{v},")?;
        }
        writeln!(w, "{}", row.label)?;
    }
    Ok(())
}
