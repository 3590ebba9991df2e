//! Model update scheduling and the channel that carries trained models to
//! the detector.
//!
//! Two update policies exist. The static creation method (SCM) trains one
//! model on the first `t_duration` seconds of traffic and never trains
//! again. The dynamic update method (DUM) retrains every `t_update`
//! seconds on the most recent `t_duration` seconds (optionally unbounded,
//! i.e. everything since start). Updates fire at the *end* of their
//! window, so a model never sees traffic from the window it will be
//! evaluated on.
//!
//! The updater talks to the detector only through a [`ModelChannel`]:
//! either an in-process slot or a file dropped under an atomic rename, so
//! a reader can never observe half a model.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{build_dataset, FeaturizeError};
use crate::ingest::TrafficStore;
use crate::learn::{deserialize_model, serialize_model, train, AlgorithmSpec, DetectionModel};
use crate::types::{NetConfig, TimeWindow};

/// Relative tolerance when deciding whether a time sits on a schedule
/// boundary; replay clocks are built from exact multiples, this only
/// absorbs float noise from arithmetic along the way.
const BOUNDARY_EPS: f64 = 1e-9;

/// How much history a DUM window covers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TrainSpan {
    /// The most recent `n` seconds.
    Finite(f64),
    /// Everything since the start of capture.
    Infinite,
}

impl fmt::Display for TrainSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainSpan::Finite(d) => write!(f, "{d}"),
            TrainSpan::Infinite => f.write_str("inf"),
        }
    }
}

/// When and on which history slice models get (re)trained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum UpdatePolicy {
    /// Train once on `[0, t_duration)`, then never again.
    Scm { t_duration: f64 },
    /// Retrain at every multiple of `t_update` on the trailing window.
    Dum {
        t_duration: TrainSpan,
        t_update: f64,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("t_duration must be positive and finite, got {0}")]
    BadDuration(f64),
    #[error("t_update must be positive and finite, got {0}")]
    BadUpdate(f64),
}

impl UpdatePolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        match *self {
            UpdatePolicy::Scm { t_duration } => {
                if !(t_duration.is_finite() && t_duration > 0.0) {
                    return Err(PolicyError::BadDuration(t_duration));
                }
            }
            UpdatePolicy::Dum {
                t_duration,
                t_update,
            } => {
                if !(t_update.is_finite() && t_update > 0.0) {
                    return Err(PolicyError::BadUpdate(t_update));
                }
                if let TrainSpan::Finite(d) = t_duration {
                    if !(d.is_finite() && d > 0.0) {
                        return Err(PolicyError::BadDuration(d));
                    }
                }
            }
        }
        Ok(())
    }

    /// The window to train on at simulated time `t`, or `None` when no
    /// update is due. SCM fires exactly once, at `t = t_duration`. DUM
    /// fires at every `t = k * t_update` (`k >= 1`) on
    /// `[max(0, t - t_duration), t)`, the whole prefix `[0, t)` for an
    /// infinite span.
    pub fn training_window(&self, t: f64) -> Option<TimeWindow> {
        match *self {
            UpdatePolicy::Scm { t_duration } => {
                if on_boundary(t, t_duration) && (t / t_duration).round() as i64 == 1 {
                    Some(TimeWindow::new(0.0, t_duration))
                } else {
                    None
                }
            }
            UpdatePolicy::Dum {
                t_duration,
                t_update,
            } => {
                if t <= 0.0 || !on_boundary(t, t_update) {
                    return None;
                }
                let start = match t_duration {
                    TrainSpan::Finite(d) => (t - d).max(0.0),
                    TrainSpan::Infinite => 0.0,
                };
                Some(TimeWindow::new(start, t))
            }
        }
    }

    /// All scheduled update times up to and including `end`.
    pub fn schedule(&self, end: f64) -> Vec<f64> {
        match *self {
            UpdatePolicy::Scm { t_duration } => {
                if t_duration <= end {
                    vec![t_duration]
                } else {
                    Vec::new()
                }
            }
            UpdatePolicy::Dum { t_update, .. } => {
                let mut times = Vec::new();
                let mut k = 1u64;
                loop {
                    let t = k as f64 * t_update;
                    if t > end {
                        break;
                    }
                    times.push(t);
                    k += 1;
                }
                times
            }
        }
    }
}

/// Whether `t` is a positive integer multiple of `step`, within
/// [`BOUNDARY_EPS`] relative tolerance.
fn on_boundary(t: f64, step: f64) -> bool {
    if step <= 0.0 || t <= 0.0 {
        return false;
    }
    let k = (t / step).round();
    k >= 1.0 && (t - k * step).abs() <= BOUNDARY_EPS * t.abs().max(1.0)
}

/// Free-function form of [`UpdatePolicy::training_window`].
pub fn training_window(policy: &UpdatePolicy, t: f64) -> Option<TimeWindow> {
    policy.training_window(t)
}

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("channel i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("stored model is unreadable: {0}")]
    Codec(#[from] crate::learn::CodecError),
}

/// Transport between the updater and the detector. `latest` must never
/// observe a partially written model.
pub trait ModelChannel: Send + Sync {
    fn publish(&self, model: &DetectionModel) -> Result<(), ChannelError>;
    fn latest(&self) -> Result<Option<Arc<DetectionModel>>, ChannelError>;
}

/// Same-process handoff through a mutex-guarded slot.
#[derive(Default)]
pub struct InProcessChannel {
    slot: Mutex<Option<Arc<DetectionModel>>>,
}

impl InProcessChannel {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ModelChannel for InProcessChannel {
    fn publish(&self, model: &DetectionModel) -> Result<(), ChannelError> {
        *self.slot.lock().unwrap() = Some(Arc::new(model.clone()));
        Ok(())
    }

    fn latest(&self) -> Result<Option<Arc<DetectionModel>>, ChannelError> {
        Ok(self.slot.lock().unwrap().clone())
    }
}

/// File-based handoff: the model is serialized to a temporary file in the
/// same directory and renamed over the target path, so readers see either
/// the old model or the new one, never a torn write.
pub struct FileDropChannel {
    path: PathBuf,
    tmp_counter: AtomicU64,
}

impl FileDropChannel {
    pub fn new<P: AsRef<Path>>(path: P) -> Self {
        FileDropChannel {
            path: path.as_ref().to_path_buf(),
            tmp_counter: AtomicU64::new(0),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl ModelChannel for FileDropChannel {
    fn publish(&self, model: &DetectionModel) -> Result<(), ChannelError> {
        let bytes = serialize_model(model);
        let counter = self.tmp_counter.fetch_add(1, Ordering::Relaxed);
        let file_name = self
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string());
        let tmp = self
            .path
            .with_file_name(format!(".{file_name}.{}.{counter}.tmp", std::process::id()));
        std::fs::write(&tmp, &bytes)?;
        std::fs::rename(&tmp, &self.path)?;
        Ok(())
    }

    fn latest(&self) -> Result<Option<Arc<DetectionModel>>, ChannelError> {
        let bytes = match std::fs::read(&self.path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ChannelError::Io(e)),
        };
        Ok(Some(Arc::new(deserialize_model(&bytes)?)))
    }
}

/// What to do when a training window holds a single class: keep the
/// previous model (default) or publish the constant predictor anyway.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SingleClassPolicy {
    #[default]
    Retain,
    Publish,
}

/// One line of the update log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    /// Simulated time the update fired.
    pub t: f64,
    pub window: TimeWindow,
    pub rows_benign: u64,
    pub rows_malicious: u64,
    /// Wall-clock training time; zero when nothing was trained.
    pub train_seconds: f64,
    pub published: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

/// Drives training according to a policy as simulated time advances.
///
/// Training failures and empty windows are logged, never propagated; the
/// detector simply keeps whatever model it already had.
pub struct Updater<'c> {
    policy: UpdatePolicy,
    algo: AlgorithmSpec,
    cfg: NetConfig,
    channel: &'c dyn ModelChannel,
    single_class: SingleClassPolicy,
    record_wall_time: bool,
    events: Vec<UpdateEvent>,
    last_fired: Option<f64>,
}

impl<'c> Updater<'c> {
    pub fn new(
        policy: UpdatePolicy,
        algo: AlgorithmSpec,
        cfg: NetConfig,
        channel: &'c dyn ModelChannel,
    ) -> Self {
        Updater {
            policy,
            algo,
            cfg,
            channel,
            single_class: SingleClassPolicy::default(),
            record_wall_time: true,
            events: Vec::new(),
            last_fired: None,
        }
    }

    pub fn with_single_class_policy(mut self, policy: SingleClassPolicy) -> Self {
        self.single_class = policy;
        self
    }

    /// With `false`, logged training times are zeroed; wall-clock noise is
    /// the only non-deterministic quantity in an update log.
    pub fn with_wall_time(mut self, record: bool) -> Self {
        self.record_wall_time = record;
        self
    }

    pub fn events(&self) -> &[UpdateEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<UpdateEvent> {
        self.events
    }

    /// Offers the updater the current simulated time. If the policy
    /// schedules an update at `t`, the dataset for the training window is
    /// built from the store, a model is trained and published, and (for
    /// finite DUM spans) history older than `t - t_duration` is evicted.
    pub fn on_tick(&mut self, store: &mut TrafficStore, t: f64) -> Option<&UpdateEvent> {
        if self.last_fired == Some(t) {
            return None;
        }
        let window = self.policy.training_window(t)?;
        self.last_fired = Some(t);

        let mut event = UpdateEvent {
            t,
            window,
            rows_benign: 0,
            rows_malicious: 0,
            train_seconds: 0.0,
            published: false,
            note: None,
        };
        match build_dataset(store, window, &self.cfg) {
            Err(FeaturizeError::EmptyWindow { .. }) => {
                event.note = Some("empty window: no labeled hosts".to_string());
            }
            Err(e) => {
                event.note = Some(e.to_string());
            }
            Ok(ds) => {
                event.rows_benign = ds.class_counts.benign;
                event.rows_malicious = ds.class_counts.malicious;
                match train(&self.algo, &ds) {
                    Err(e) => {
                        event.note = Some(format!("training failed: {e}"));
                    }
                    Ok(model) => {
                        event.train_seconds = if self.record_wall_time {
                            model.train_seconds
                        } else {
                            0.0
                        };
                        let retain = model.is_single_class()
                            && self.single_class == SingleClassPolicy::Retain;
                        if retain {
                            event.note =
                                Some("single-class window: previous model retained".to_string());
                        } else {
                            match self.channel.publish(&model) {
                                Ok(()) => event.published = true,
                                Err(e) => {
                                    event.note = Some(format!("publish failed: {e}"));
                                }
                            }
                        }
                    }
                }
            }
        }
        self.evict(store, t);
        self.events.push(event);
        self.events.last()
    }

    /// Finite DUM spans drop history no future window can need; SCM and
    /// infinite spans keep everything.
    fn evict(&self, store: &mut TrafficStore, t: f64) {
        if let UpdatePolicy::Dum {
            t_duration: TrainSpan::Finite(d),
            ..
        } = self.policy
        {
            store.evict_before((t - d).max(0.0));
        }
    }
}

/// Runs an updater over a pre-filled store for every clock tick, returning
/// the update log. The clock must be monotone; replay drivers derive it
/// from packet timestamps.
pub fn run_updater(
    store: &mut TrafficStore,
    policy: UpdatePolicy,
    algo: AlgorithmSpec,
    cfg: &NetConfig,
    channel: &dyn ModelChannel,
    clock: impl IntoIterator<Item = f64>,
) -> Vec<UpdateEvent> {
    let mut updater = Updater::new(policy, algo, cfg.clone(), channel);
    for t in clock {
        updater.on_tick(store, t);
    }
    updater.into_events()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::AlgorithmKind;
    use crate::types::{direction_of, remote_host_of, PacketRecord, PROTO_TCP};
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    const HOUR: f64 = 3600.0;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn cfg() -> NetConfig {
        NetConfig::new(
            vec!["192.168.1.0/24".parse().unwrap()],
            [ip("192.168.1.2")].into_iter().collect(),
            [ip("192.168.1.20")].into_iter().collect(),
        )
        .unwrap()
    }

    fn pkt(ts: f64, src: &str, dst: &str, len: u32, port: u16) -> PacketRecord {
        PacketRecord {
            ts,
            src_addr: ip(src),
            dst_addr: ip(dst),
            src_port: 40000,
            dst_port: port,
            proto: PROTO_TCP,
            length: len,
            ttl: 51,
        }
    }

    /// One malicious and one benign host exchanging packets every
    /// `step` seconds for `hours` hours.
    fn filled_store(hours: u32, step: f64) -> TrafficStore {
        let c = cfg();
        let mut store = TrafficStore::new();
        let mut t = 0.0;
        while t < hours as f64 * HOUR {
            for p in [
                pkt(t, "5.5.5.5", "192.168.1.2", 60, 23),
                pkt(t + 0.2, "6.6.6.6", "192.168.1.20", 900, 443),
            ] {
                let d = direction_of(&p, &c).unwrap();
                store.append(p, d, remote_host_of(&p, d)).unwrap();
            }
            t += step;
        }
        store
    }

    #[test]
    fn dum_window_slides() {
        let p = UpdatePolicy::Dum {
            t_duration: TrainSpan::Finite(HOUR),
            t_update: HOUR,
        };
        assert_eq!(
            p.training_window(3.0 * HOUR),
            Some(TimeWindow::new(2.0 * HOUR, 3.0 * HOUR))
        );
        assert_eq!(p.training_window(1.5 * HOUR), None);
    }

    #[test]
    fn dum_window_clamps_at_start_and_supports_infinite_span() {
        let long = UpdatePolicy::Dum {
            t_duration: TrainSpan::Finite(2.0 * HOUR),
            t_update: HOUR,
        };
        assert_eq!(
            long.training_window(5.0 * HOUR),
            Some(TimeWindow::new(3.0 * HOUR, 5.0 * HOUR))
        );
        assert_eq!(long.training_window(HOUR), Some(TimeWindow::new(0.0, HOUR)));
        let inf = UpdatePolicy::Dum {
            t_duration: TrainSpan::Infinite,
            t_update: HOUR,
        };
        assert_eq!(
            inf.training_window(5.0 * HOUR),
            Some(TimeWindow::new(0.0, 5.0 * HOUR))
        );
    }

    #[test]
    fn scm_fires_exactly_once() {
        let p = UpdatePolicy::Scm { t_duration: HOUR };
        assert_eq!(p.training_window(0.5 * HOUR), None);
        assert_eq!(p.training_window(HOUR), Some(TimeWindow::new(0.0, HOUR)));
        assert_eq!(p.training_window(2.0 * HOUR), None);
        assert_eq!(p.schedule(5.0 * HOUR), vec![HOUR]);
    }

    #[test]
    fn policy_validation() {
        assert!(UpdatePolicy::Scm { t_duration: HOUR }.validate().is_ok());
        assert!(UpdatePolicy::Scm { t_duration: 0.0 }.validate().is_err());
        assert!(UpdatePolicy::Dum {
            t_duration: TrainSpan::Infinite,
            t_update: 0.0
        }
        .validate()
        .is_err());
        assert!(UpdatePolicy::Dum {
            t_duration: TrainSpan::Finite(-1.0),
            t_update: HOUR
        }
        .validate()
        .is_err());
    }

    #[test]
    fn scm_over_five_hours_trains_once() {
        let c = cfg();
        let mut store = filled_store(5, 10.0);
        let channel = InProcessChannel::new();
        let clock: Vec<f64> = (1..=5).map(|k| k as f64 * HOUR).collect();
        let events = run_updater(
            &mut store,
            UpdatePolicy::Scm { t_duration: HOUR },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0),
            &c,
            &channel,
            clock,
        );
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].t, HOUR);
        assert!(events[0].published);
        assert_eq!(events[0].window, TimeWindow::new(0.0, HOUR));
        let model = channel.latest().unwrap().unwrap();
        assert_eq!(model.trained_at, HOUR);
        // SCM never evicts.
        assert_eq!(store.horizon(), 0.0);
    }

    #[test]
    fn dum_hourly_over_five_hours_trains_five_times_and_evicts() {
        let c = cfg();
        let mut store = filled_store(5, 10.0);
        let channel = InProcessChannel::new();
        let clock: Vec<f64> = (1..=5).map(|k| k as f64 * HOUR).collect();
        let events = run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Finite(HOUR),
                t_update: HOUR,
            },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0),
            &c,
            &channel,
            clock,
        );
        assert_eq!(events.len(), 5);
        for (k, e) in events.iter().enumerate() {
            let t = (k + 1) as f64 * HOUR;
            assert_eq!(e.t, t);
            assert!(e.published);
            assert_eq!(e.window, TimeWindow::new(t - HOUR, t));
            assert!(e.rows_benign >= 1 && e.rows_malicious >= 1);
        }
        assert_eq!(store.horizon(), 4.0 * HOUR);
        assert_eq!(channel.latest().unwrap().unwrap().trained_at, 5.0 * HOUR);
    }

    #[test]
    fn empty_hour_is_logged_and_nothing_published() {
        let c = cfg();
        let mut store = TrafficStore::new();
        // Traffic only in hour 1; hour 2 is silent.
        let mut t = 0.0;
        while t < HOUR {
            let p = pkt(t, "5.5.5.5", "192.168.1.2", 60, 23);
            let d = direction_of(&p, &c).unwrap();
            store.append(p, d, remote_host_of(&p, d)).unwrap();
            let q = pkt(t + 0.1, "6.6.6.6", "192.168.1.20", 900, 443);
            let d = direction_of(&q, &c).unwrap();
            store.append(q, d, remote_host_of(&q, d)).unwrap();
            t += 60.0;
        }
        let channel = InProcessChannel::new();
        let events = run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Finite(HOUR),
                t_update: HOUR,
            },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0),
            &c,
            &channel,
            vec![HOUR, 2.0 * HOUR],
        );
        assert_eq!(events.len(), 2);
        assert!(events[0].published);
        assert!(!events[1].published);
        assert!(events[1].note.as_deref().unwrap().contains("empty window"));
        // The detector still has the hour-1 model.
        assert_eq!(channel.latest().unwrap().unwrap().trained_at, HOUR);
    }

    #[test]
    fn single_class_window_retains_previous_model_by_default() {
        let c = cfg();
        let mut store = TrafficStore::new();
        // Hour 1: both classes. Hour 2: only the malicious host.
        let mut t = 0.0;
        while t < HOUR {
            for p in [
                pkt(t, "5.5.5.5", "192.168.1.2", 60, 23),
                pkt(t + 0.2, "6.6.6.6", "192.168.1.20", 900, 443),
            ] {
                let d = direction_of(&p, &c).unwrap();
                store.append(p, d, remote_host_of(&p, d)).unwrap();
            }
            t += 60.0;
        }
        while t < 2.0 * HOUR {
            let p = pkt(t, "5.5.5.5", "192.168.1.2", 60, 23);
            let d = direction_of(&p, &c).unwrap();
            store.append(p, d, remote_host_of(&p, d)).unwrap();
            t += 60.0;
        }
        let channel = InProcessChannel::new();
        let events = run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Finite(HOUR),
                t_update: HOUR,
            },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0),
            &c,
            &channel,
            vec![HOUR, 2.0 * HOUR],
        );
        assert!(events[0].published);
        assert!(!events[1].published);
        assert!(events[1].note.as_deref().unwrap().contains("single-class"));
        assert!(events[1].train_seconds >= 0.0);
        assert_eq!(channel.latest().unwrap().unwrap().trained_at, HOUR);
    }

    #[test]
    fn infinite_span_never_evicts_and_trains_on_everything() {
        let c = cfg();
        let mut store = filled_store(3, 10.0);
        let before = store.len();
        let channel = InProcessChannel::new();
        let events = run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Infinite,
                t_update: HOUR,
            },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0),
            &c,
            &channel,
            vec![HOUR, 2.0 * HOUR, 3.0 * HOUR],
        );
        assert_eq!(store.len(), before);
        assert_eq!(store.horizon(), 0.0);
        assert_eq!(events[2].window, TimeWindow::new(0.0, 3.0 * HOUR));
    }

    #[test]
    fn in_process_channel_is_last_writer_wins() {
        let c = cfg();
        let mut store = filled_store(2, 10.0);
        let channel = InProcessChannel::new();
        assert!(channel.latest().unwrap().is_none());
        let algo = AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 0);
        run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Finite(HOUR),
                t_update: HOUR,
            },
            algo,
            &c,
            &channel,
            vec![HOUR, 2.0 * HOUR],
        );
        assert_eq!(channel.latest().unwrap().unwrap().trained_at, 2.0 * HOUR);
    }

    #[test]
    fn file_drop_channel_round_trips_and_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        let channel = FileDropChannel::new(dir.path().join("model.sadm"));
        assert!(channel.latest().unwrap().is_none());

        let c = cfg();
        let mut store = filled_store(2, 10.0);
        run_updater(
            &mut store,
            UpdatePolicy::Dum {
                t_duration: TrainSpan::Finite(HOUR),
                t_update: HOUR,
            },
            AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 1),
            &c,
            &channel,
            vec![HOUR, 2.0 * HOUR],
        );
        let m = channel.latest().unwrap().unwrap();
        assert_eq!(m.trained_at, 2.0 * HOUR);
        // No temp files left behind.
        let stray: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name() != "model.sadm")
            .collect();
        assert!(stray.is_empty());
    }

    /// Readers polling a file-drop channel during concurrent publishes see
    /// only whole models: every read either finds nothing (before the
    /// first publish) or decodes cleanly with a valid checksum.
    #[test]
    fn file_drop_channel_has_no_torn_reads() {
        use std::sync::atomic::{AtomicBool, Ordering};
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.sadm");
        let channel = FileDropChannel::new(&path);

        let c = cfg();
        let store = filled_store(1, 5.0);
        let ds = build_dataset(&store, TimeWindow::new(0.0, HOUR), &c).unwrap();
        let models: Vec<DetectionModel> = (0..8)
            .map(|seed| {
                let spec = AlgorithmSpec::with_defaults(AlgorithmKind::RandomForest, seed);
                train(&spec, &ds).unwrap()
            })
            .collect();
        let trained_ats: Vec<f64> = models.iter().map(|m| m.trained_at).collect();

        let done = AtomicBool::new(false);
        std::thread::scope(|scope| {
            let writer_channel = FileDropChannel::new(&path);
            let writer_models = &models;
            let writer_done = &done;
            scope.spawn(move || {
                for _ in 0..30 {
                    for m in writer_models {
                        writer_channel.publish(m).unwrap();
                    }
                }
                writer_done.store(true, Ordering::Release);
            });
            let mut reads = 0u64;
            while !done.load(Ordering::Acquire) {
                match channel.latest() {
                    Ok(None) => {}
                    Ok(Some(m)) => {
                        assert!(trained_ats.contains(&m.trained_at));
                        reads += 1;
                    }
                    Err(e) => panic!("torn or unreadable model: {e}"),
                }
            }
            assert!(reads > 0);
        });
    }

    /// Brute-force reference for the schedule algebra, written from the
    /// policy definitions rather than the implementation.
    fn reference_window(policy: &UpdatePolicy, t: f64) -> Option<(f64, f64)> {
        match *policy {
            UpdatePolicy::Scm { t_duration } => {
                let is_d = (t - t_duration).abs() <= 1e-9 * t.abs().max(1.0);
                if is_d {
                    Some((0.0, t_duration))
                } else {
                    None
                }
            }
            UpdatePolicy::Dum {
                t_duration,
                t_update,
            } => {
                if t <= 0.0 {
                    return None;
                }
                let k = (t / t_update).round();
                if k < 1.0 || (t - k * t_update).abs() > 1e-9 * t.abs().max(1.0) {
                    return None;
                }
                let start = match t_duration {
                    TrainSpan::Finite(d) => (t - d).max(0.0),
                    TrainSpan::Infinite => 0.0,
                };
                Some((start, t))
            }
        }
    }

    proptest! {
        #[test]
        fn training_window_matches_reference(
            policy_kind in 0u8..3,
            dur_steps in 1u32..50,
            upd_steps in 1u32..50,
            k in 0u32..100,
            off_boundary in proptest::bool::ANY,
        ) {
            let step = 360.0;
            let t_duration = dur_steps as f64 * step;
            let t_update = upd_steps as f64 * step;
            let policy = match policy_kind {
                0 => UpdatePolicy::Scm { t_duration },
                1 => UpdatePolicy::Dum { t_duration: TrainSpan::Finite(t_duration), t_update },
                _ => UpdatePolicy::Dum { t_duration: TrainSpan::Infinite, t_update },
            };
            let base = match policy {
                UpdatePolicy::Scm { .. } => t_duration,
                UpdatePolicy::Dum { .. } => t_update,
            };
            let t = if off_boundary {
                k as f64 * base + 0.37 * step
            } else {
                k as f64 * base
            };
            let got = policy.training_window(t).map(|w| (w.start, w.end));
            prop_assert_eq!(got, reference_window(&policy, t));
        }

        /// Consecutive DUM windows overlap by exactly
        /// max(0, t_duration - t_update) once the span is saturated.
        #[test]
        fn dum_overlap_algebra(dur_steps in 1u32..30, upd_steps in 1u32..30, k in 2u32..50) {
            let step = 600.0;
            let d = dur_steps as f64 * step;
            let u = upd_steps as f64 * step;
            let policy = UpdatePolicy::Dum { t_duration: TrainSpan::Finite(d), t_update: u };
            let t1 = k as f64 * u;
            let t2 = (k + 1) as f64 * u;
            let w1 = policy.training_window(t1).unwrap();
            let w2 = policy.training_window(t2).unwrap();
            prop_assert!((w1.duration() - d.min(t1)).abs() < 1e-6);
            if w1.start > 0.0 {
                let overlap = (w1.end - w2.start).max(0.0);
                prop_assert!((overlap - (d - u).max(0.0)).abs() < 1e-6);
            }
        }
    }
}
