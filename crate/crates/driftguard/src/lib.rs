//! Self-adaptive anomaly detection for gateway traffic.
//!
//! A honeypot address set provides free ground truth: remote hosts that
//! touch it are malicious, hosts that only talk to real devices are
//! benign. Per-host features extracted from packet headers feed a binary
//! classifier, and the classifier is either trained once on the first
//! slice of traffic (SCM, the static creation method) or retrained on a
//! sliding window as traffic keeps arriving (DUM, the dynamic update
//! method). A replay driver evaluates either policy over recorded or
//! synthetic traffic in simulated time.
//!
//! # Pipeline
//!
//! ```text
//!  pcap / NDJSON / synthetic
//!        │
//!   [ingest]   direction + host labeling, retention store
//!        │
//!  [featurize] per-host window features, labeled datasets
//!        │
//!    [learn]   k-NN / decision tree / random forest / GBDT, model codec
//!        │
//!    [adapt]   SCM & DUM scheduling, model channels (file drop, in-process)
//!        │
//!   [gateway]  per-window classification, malicious-IP list, packet policy
//!        │
//!   [replay]   simulated-time evaluation → [report] CSV / NDJSON / JSON
//! ```
//!
//! # Where to start
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example generate_scenario   # synthesize traffic, write NDJSON + pcap
//! cargo run --example label_hosts         # honeypot/device contact labeling
//! cargo run --example extract_features    # per-host window features, CSV dump
//! cargo run --example train_and_save      # train, serialize, reload, predict
//! cargo run --example sliding_window_updates  # DUM updater over a stream
//! cargo run --example gateway_detection   # detection loop + malicious list
//! cargo run --example compare_scm_dum     # F1 transitions under drift
//! cargo run --example port_distribution   # per-flow destination-port shares
//! ```
//!
//! The `driftguard` binary wraps the same pipeline as subcommands
//! (`gen`, `ingest`, `train`, `replay`, `report`); see the README.

pub mod adapt;
pub mod featurize;
pub mod gateway;
pub mod ingest;
pub mod learn;
pub mod replay;
pub mod report;
pub mod synth;
pub mod types;

pub use adapt::{
    run_updater, training_window, FileDropChannel, InProcessChannel, ModelChannel, TrainSpan,
    UpdateEvent, UpdatePolicy, Updater,
};
pub use featurize::{
    build_dataset, encode, extract_features, schema_hash, FeatureVector, HostWindowFeatures,
    LabeledDataset,
};
pub use gateway::{apply_policy, Gateway, HandlingPolicy, MaliciousList, PacketAction};
pub use ingest::{label_hosts, read_ndjson, read_pcap, write_ndjson, write_pcap, TrafficStore};
pub use learn::{
    deserialize_model, f1_score, serialize_model, train, AlgorithmKind, AlgorithmSpec,
    DetectionModel, EvalMetrics,
};
pub use replay::{port_distribution, replay, EvaluationReport, ReplayOptions};
pub use report::{emit_report, load_report};
pub use synth::{generate_synthetic, Scenario, ScenarioConfig, TrafficPattern};
pub use types::{direction_of, Direction, HostKey, Label, NetConfig, PacketRecord, TimeWindow};
