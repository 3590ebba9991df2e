//! End-to-end replay: drives the store, the updater, and the gateway over
//! a time-ordered packet stream in simulated time and collects the three
//! evaluation series (per-window F1, per-flow destination-port shares,
//! and training times) into one report.
//!
//! Everything is event-ordered: at a boundary time `t`, the window
//! `[t - W, t)` is classified first with whatever model the channel held,
//! and only then may the updater train on data up to `t`. A model
//! therefore never scores the window it was trained on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapt::{
    ChannelError, InProcessChannel, ModelChannel, PolicyError, SingleClassPolicy, UpdateEvent,
    UpdatePolicy, Updater,
};
use crate::featurize::FEATURE_DIM;
use crate::gateway::{Classification, Gateway, GatewayError, HandlingPolicy, PacketAction};
use crate::ingest::{label_hosts, TrafficStore};
use crate::learn::{f1_score, AlgorithmSpec, EvalMetrics, LearnError};
use crate::types::{
    direction_of, remote_host_of, HostKey, Label, NetConfig, PacketRecord, TimeWindow,
};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("invalid update policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("invalid evaluation window {0}")]
    BadEvalWindow(f64),
    #[error("input records out of order at index {index}")]
    UnsortedInput { index: usize },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("model channel: {0}")]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

/// Knobs for a replay run.
#[derive(Clone, Debug)]
pub struct ReplayOptions {
    /// Evaluation window length in seconds.
    pub eval_window: f64,
    /// Ports listed individually in the distribution; the rest pool into
    /// an "others" bucket.
    pub top_ports: usize,
    /// Record wall-clock training times. Turning this off zeroes them so
    /// two runs with the same seeds emit byte-identical reports.
    pub measure_training_time: bool,
    pub single_class: SingleClassPolicy,
    pub handling: HandlingPolicy,
}

impl Default for ReplayOptions {
    fn default() -> Self {
        ReplayOptions {
            eval_window: 3600.0,
            top_ports: 6,
            measure_training_time: true,
            single_class: SingleClassPolicy::default(),
            handling: HandlingPolicy::default(),
        }
    }
}

/// Metrics for one classified evaluation window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window: TimeWindow,
    pub metrics: EvalMetrics,
    /// Hosts active in the window, labeled or not.
    pub active_hosts: u64,
    /// `trained_at` of the model that scored this window.
    pub model_trained_at: f64,
}

/// One training run's cost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTime {
    pub t: f64,
    pub rows: u64,
    pub seconds: f64,
}

/// Flow share of one destination port. `port` is `None` for the pooled
/// "others" bucket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortShare {
    pub port: Option<u16>,
    pub flows: u64,
    pub fraction: f64,
}

/// Per-flow destination-port distribution over incoming traffic.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PortDistribution {
    pub total_flows: u64,
    pub entries: Vec<PortShare>,
}

/// Packet verdict tallies under the handling policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacketActionCounts {
    pub forwarded: u64,
    pub dropped: u64,
    pub mirrored: u64,
}

/// Everything a replay produces.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Classified windows, in time order.
    pub windows: Vec<WindowReport>,
    /// Windows that closed before any model existed; excluded from F1
    /// series.
    pub deferred: Vec<TimeWindow>,
    pub updates: Vec<UpdateEvent>,
    pub port_distribution: PortDistribution,
    pub training_times: Vec<TrainingTime>,
    pub packet_actions: PacketActionCounts,
    /// Final state of the gateway's malicious-address list.
    pub malicious_list: crate::gateway::MaliciousList,
}

impl EvaluationReport {
    /// Mean F1 over classified windows, `None` when there are none.
    pub fn mean_f1(&self) -> Option<f64> {
        if self.windows.is_empty() {
            return None;
        }
        Some(self.windows.iter().map(|w| w.metrics.f1).sum::<f64>() / self.windows.len() as f64)
    }
}

/// Counts distinct incoming 5-tuples per destination port and returns the
/// `top_n` busiest ports plus an "others" bucket. Fractions are over all
/// flows; an empty input yields an empty distribution.
pub fn port_distribution<'a, I>(records: I, cfg: &NetConfig, top_n: usize) -> PortDistribution
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    let mut flows: BTreeSet<(u32, u32, u16, u16, u8)> = BTreeSet::new();
    for p in records {
        if direction_of(p, cfg) == Some(crate::types::Direction::Incoming) {
            flows.insert((
                u32::from(p.src_addr),
                u32::from(p.dst_addr),
                p.src_port,
                p.dst_port,
                p.proto,
            ));
        }
    }
    let total = flows.len() as u64;
    if total == 0 {
        return PortDistribution::default();
    }
    let mut per_port: BTreeMap<u16, u64> = BTreeMap::new();
    for (_, _, _, dst_port, _) in flows {
        *per_port.entry(dst_port).or_insert(0) += 1;
    }
    let mut ranked: Vec<(u16, u64)> = per_port.into_iter().collect();
    // Busiest first; equal counts resolve by port number so the output is
    // stable.
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut entries = Vec::new();
    let mut others = 0u64;
    for (rank, (port, flows)) in ranked.into_iter().enumerate() {
        if rank < top_n {
            entries.push(PortShare {
                port: Some(port),
                flows,
                fraction: flows as f64 / total as f64,
            });
        } else {
            others += flows;
        }
    }
    if others > 0 {
        entries.push(PortShare {
            port: None,
            flows: others,
            fraction: others as f64 / total as f64,
        });
    }
    PortDistribution {
        total_flows: total,
        entries,
    }
}

/// Replays a packet stream under an update policy and algorithm.
///
/// Ground truth: pass the generator's role map when the stream is
/// synthetic; with `None`, hosts are labeled by honeypot/device contact
/// over the whole stream. Hosts without truth are still classified (they
/// feed the malicious list) but never scored.
pub fn replay(
    records: &[PacketRecord],
    truth: Option<&BTreeMap<HostKey, Label>>,
    policy: UpdatePolicy,
    algo: AlgorithmSpec,
    cfg: &NetConfig,
    opts: &ReplayOptions,
) -> Result<EvaluationReport, ReplayError> {
    policy.validate()?;
    if !(opts.eval_window.is_finite() && opts.eval_window > 0.0) {
        return Err(ReplayError::BadEvalWindow(opts.eval_window));
    }
    let mut report = EvaluationReport {
        port_distribution: port_distribution(records, cfg, opts.top_ports),
        ..EvaluationReport::default()
    };
    let Some(last) = records.last() else {
        return Ok(report);
    };
    // Validate up front: the schedule below is sized from the final
    // timestamp, so a non-finite or disordered stream must not reach it.
    let mut prev = f64::NEG_INFINITY;
    for (index, p) in records.iter().enumerate() {
        if !p.ts.is_finite() || p.ts < 0.0 || p.ts < prev {
            return Err(ReplayError::UnsortedInput { index });
        }
        prev = p.ts;
    }

    let derived_truth;
    let truth: &BTreeMap<HostKey, Label> = match truth {
        Some(t) => t,
        None => {
            let labels = label_hosts(records.iter(), cfg);
            derived_truth = labels
                .iter()
                .map(|(host, entry)| (*host, entry.label))
                .collect();
            &derived_truth
        }
    };

    let w = opts.eval_window;
    let total_end = ((last.ts / w).floor() + 1.0) * w;
    let eval_times: Vec<f64> = {
        let mut times = Vec::new();
        let mut k = 1u64;
        loop {
            let t = k as f64 * w;
            times.push(t);
            if t >= total_end - w * 0.5 {
                break;
            }
            k += 1;
        }
        times
    };
    let update_times = policy.schedule(total_end);

    let channel = InProcessChannel::new();
    let mut updater = Updater::new(policy, algo, cfg.clone(), &channel)
        .with_single_class_policy(opts.single_class)
        .with_wall_time(opts.measure_training_time);
    let mut gateway = Gateway::new(cfg.clone(), w, opts.handling);
    let mut store = TrafficStore::new();

    let mut next_eval = 0usize;
    let mut next_update = 0usize;

    // Fires every boundary event due at or before `now`. Evaluation runs
    // before updates at the same instant so a window is always scored
    // with the model that existed when it closed.
    macro_rules! fire_due {
        ($now:expr) => {
            loop {
                let eval_t = eval_times.get(next_eval).copied();
                let update_t = update_times.get(next_update).copied();
                let (t, is_eval) = match (eval_t, update_t) {
                    (Some(e), Some(u)) if e <= u => (e, true),
                    (Some(_), Some(u)) => (u, false),
                    (Some(e), None) => (e, true),
                    (None, Some(u)) => (u, false),
                    (None, None) => break,
                };
                if t > $now {
                    break;
                }
                if is_eval {
                    close_window(&mut gateway, &channel, truth, t, w, &mut report)?;
                    next_eval += 1;
                } else {
                    updater.on_tick(&mut store, t);
                    next_update += 1;
                }
            }
        };
    }

    for p in records {
        fire_due!(p.ts);
        match gateway.apply_policy(p) {
            PacketAction::Forward => report.packet_actions.forwarded += 1,
            PacketAction::Drop => report.packet_actions.dropped += 1,
            PacketAction::Mirror => report.packet_actions.mirrored += 1,
        }
        gateway.observe(p);
        if let Some(dir) = direction_of(p, cfg) {
            store
                .append(*p, dir, remote_host_of(p, dir))
                .expect("time-ordered input cannot violate store order");
        }
    }
    fire_due!(f64::INFINITY);

    report.updates = updater.into_events();
    report.training_times = report
        .updates
        .iter()
        .filter(|e| e.rows_benign + e.rows_malicious > 0)
        .map(|e| TrainingTime {
            t: e.t,
            rows: e.rows_benign + e.rows_malicious,
            seconds: e.train_seconds,
        })
        .collect();
    report.malicious_list = gateway.list;
    Ok(report)
}

fn close_window(
    gateway: &mut Gateway,
    channel: &InProcessChannel,
    truth: &BTreeMap<HostKey, Label>,
    t: f64,
    w: f64,
    report: &mut EvaluationReport,
) -> Result<(), ReplayError> {
    if let Some(model) = channel.latest()? {
        gateway.swap_model(model)?;
    }
    let window = TimeWindow::new(t - w, t);
    match gateway.classify_active_hosts(t)? {
        Classification::Deferred { .. } => {
            report.deferred.push(window);
        }
        Classification::Verdicts(verdicts) => {
            let mut preds = Vec::new();
            let mut truths = Vec::new();
            for v in &verdicts {
                if let Some(&label) = truth.get(&v.host) {
                    preds.push(v.label);
                    truths.push(label);
                }
            }
            let metrics = f1_score(&preds, &truths)?;
            let model_trained_at = gateway
                .model()
                .map(|m| m.trained_at)
                .expect("classified window implies a model");
            report.windows.push(WindowReport {
                window,
                metrics,
                active_hosts: verdicts.len() as u64,
                model_trained_at,
            });
        }
    }
    Ok(())
}

// Referenced here so the dimension constant stays the single source of
// truth for report consumers sizing their columns.
const _: () = assert!(FEATURE_DIM == 9);

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapt::TrainSpan;
    use crate::learn::AlgorithmKind;
    use crate::synth::{generate_synthetic, ScenarioConfig};
    use crate::types::PROTO_TCP;
    use std::net::Ipv4Addr;

    const HOUR: f64 = 3600.0;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn dum_hourly() -> UpdatePolicy {
        UpdatePolicy::Dum {
            t_duration: TrainSpan::Finite(HOUR),
            t_update: HOUR,
        }
    }

    #[test]
    fn separable_scenario_scores_perfectly_after_first_update() {
        let scenario =
            generate_synthetic(&ScenarioConfig::separable(4, 3, 4.0 * HOUR, 42)).unwrap();
        let report = replay(
            &scenario.records,
            Some(&scenario.truth),
            dum_hourly(),
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 1),
            &scenario.net,
            &ReplayOptions::default(),
        )
        .unwrap();
        // First window has no model yet; the remaining three score 1.0.
        assert_eq!(report.deferred.len(), 1);
        assert_eq!(report.windows.len(), 3);
        for wr in &report.windows {
            assert_eq!(wr.metrics.f1, 1.0, "window {:?}", wr.window);
            assert_eq!(wr.active_hosts, 7);
            assert_eq!(wr.metrics.total(), 7);
        }
        assert_eq!(report.updates.len(), 4);
        assert!(report.updates.iter().all(|u| u.published));
        // Model for window [kW,(k+1)W) was trained at kW.
        for wr in &report.windows {
            assert_eq!(wr.model_trained_at, wr.window.start);
        }
    }

    #[test]
    fn empty_input_is_an_empty_report() {
        let cfg = ScenarioConfig::net_config();
        let report = replay(
            &[],
            None,
            dum_hourly(),
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 1),
            &cfg,
            &ReplayOptions::default(),
        )
        .unwrap();
        assert!(report.windows.is_empty());
        assert!(report.updates.is_empty());
        assert_eq!(report.port_distribution.total_flows, 0);
    }

    #[test]
    fn derived_truth_matches_generator_truth() {
        let scenario = generate_synthetic(&ScenarioConfig::separable(3, 2, 2.0 * HOUR, 9)).unwrap();
        let algo = AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 2);
        let opts = ReplayOptions {
            measure_training_time: false,
            ..ReplayOptions::default()
        };
        let with_truth = replay(
            &scenario.records,
            Some(&scenario.truth),
            dum_hourly(),
            algo,
            &scenario.net,
            &opts,
        )
        .unwrap();
        let derived = replay(
            &scenario.records,
            None,
            dum_hourly(),
            algo,
            &scenario.net,
            &opts,
        )
        .unwrap();
        assert_eq!(with_truth, derived);
    }

    #[test]
    fn out_of_order_input_is_rejected() {
        let scenario = generate_synthetic(&ScenarioConfig::separable(2, 1, HOUR, 1)).unwrap();
        let mut records = scenario.records.clone();
        records.swap(10, 20);
        let err = replay(
            &records,
            None,
            dum_hourly(),
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 1),
            &scenario.net,
            &ReplayOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, ReplayError::UnsortedInput { .. }));
    }

    fn flow_pkt(ts: f64, src: &str, sport: u16, dport: u16) -> PacketRecord {
        PacketRecord {
            ts,
            src_addr: ip(src),
            dst_addr: ip("192.168.1.2"),
            src_port: sport,
            dst_port: dport,
            proto: PROTO_TCP,
            length: 60,
            ttl: 51,
        }
    }

    #[test]
    fn port_distribution_counts_flows_not_packets() {
        let cfg = ScenarioConfig::net_config();
        // Three flows: two to port 23 (hosts A and B), one to port 80 (A).
        let mut records = vec![
            flow_pkt(1.0, "5.5.5.5", 1000, 23),
            flow_pkt(2.0, "6.6.6.6", 1000, 23),
            flow_pkt(3.0, "5.5.5.5", 1000, 80),
        ];
        // Repeats of an existing 5-tuple change nothing.
        for k in 0..100 {
            records.push(flow_pkt(4.0 + k as f64, "5.5.5.5", 1000, 23));
        }
        let dist = port_distribution(records.iter(), &cfg, 6);
        assert_eq!(dist.total_flows, 3);
        assert_eq!(dist.entries.len(), 2);
        assert_eq!(dist.entries[0].port, Some(23));
        assert_eq!(dist.entries[0].flows, 2);
        assert!((dist.entries[0].fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dist.entries[1].port, Some(80));
        assert!((dist.entries[1].fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn port_distribution_pools_the_tail_into_others() {
        let cfg = ScenarioConfig::net_config();
        let records = [
            flow_pkt(1.0, "5.5.5.5", 1000, 23),
            flow_pkt(2.0, "6.6.6.6", 1000, 23),
            flow_pkt(3.0, "5.5.5.5", 1000, 80),
        ];
        let dist = port_distribution(records.iter(), &cfg, 1);
        assert_eq!(dist.entries.len(), 2);
        assert_eq!(dist.entries[0].port, Some(23));
        assert_eq!(dist.entries[1].port, None);
        assert!((dist.entries[1].fraction - 1.0 / 3.0).abs() < 1e-12);
        let total: f64 = dist.entries.iter().map(|e| e.fraction).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn port_distribution_of_nothing_is_empty() {
        let cfg = ScenarioConfig::net_config();
        let dist = port_distribution([].iter(), &cfg, 5);
        assert_eq!(dist, PortDistribution::default());
    }

    #[test]
    fn unlabeled_hosts_are_classified_but_not_scored() {
        // Three hosts: a scanner against the honeypot, a device talker,
        // and one that only touches an unmanaged local address. The last
        // one has no ground truth, so it counts as active but never
        // enters the confusion matrix.
        let cfg = ScenarioConfig::net_config();
        let mk = |ts: f64, src: &str, dst: &str, port: u16, len: u32| PacketRecord {
            ts,
            src_addr: ip(src),
            dst_addr: ip(dst),
            src_port: 40000,
            dst_port: port,
            proto: PROTO_TCP,
            length: len,
            ttl: 51,
        };
        let mut records = Vec::new();
        let mut t = 0.0;
        while t < 2.0 * HOUR {
            records.push(mk(t, "5.5.5.5", "192.168.1.2", 23, 60));
            records.push(mk(t + 0.4, "5.5.5.5", "192.168.1.2", 23, 60));
            records.push(mk(t + 1.0, "6.6.6.6", "192.168.1.10", 443, 900));
            records.push(mk(t + 2.0, "7.7.7.7", "192.168.1.99", 8080, 500));
            t += 30.0;
        }
        let report = replay(
            &records,
            None,
            dum_hourly(),
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 1),
            &cfg,
            &ReplayOptions::default(),
        )
        .unwrap();
        assert_eq!(report.windows.len(), 1);
        let w = &report.windows[0];
        assert_eq!(w.active_hosts, 3);
        assert_eq!(w.metrics.total(), 2, "only labeled hosts are scored");
        assert_eq!(w.metrics.f1, 1.0);
    }

    #[test]
    fn packet_actions_follow_the_malicious_list() {
        // Constant-malicious traffic with FilterDrop: once the first
        // window closes and flags the host, its packets start dropping.
        let scenario = generate_synthetic(&ScenarioConfig::separable(2, 2, 3.0 * HOUR, 4)).unwrap();
        let opts = ReplayOptions {
            handling: HandlingPolicy::FilterDrop,
            ..ReplayOptions::default()
        };
        let report = replay(
            &scenario.records,
            Some(&scenario.truth),
            dum_hourly(),
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 3),
            &scenario.net,
            &opts,
        )
        .unwrap();
        assert!(report.packet_actions.dropped > 0);
        assert!(report.packet_actions.forwarded > 0);
        assert_eq!(report.packet_actions.mirrored, 0);
    }
}
