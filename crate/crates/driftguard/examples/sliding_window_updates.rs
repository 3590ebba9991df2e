//! Run the dynamic update method over a stored stream: hourly retraining
//! on the trailing hour, with the update log printed as NDJSON.
//!
//! ```bash
//! cargo run --example sliding_window_updates
//! ```

use driftguard::adapt::{run_updater, InProcessChannel, ModelChannel, TrainSpan, UpdatePolicy};
use driftguard::ingest::TrafficStore;
use driftguard::learn::{AlgorithmKind, AlgorithmSpec};
use driftguard::synth::{generate_synthetic, ScenarioConfig};
use driftguard::types::{direction_of, remote_host_of};

fn main() -> anyhow::Result<()> {
    let hours = 5;
    let scenario = generate_synthetic(&ScenarioConfig::separable(6, 4, hours as f64 * 3600.0, 31))?;
    let mut store = TrafficStore::new();
    for p in &scenario.records {
        if let Some(dir) = direction_of(p, &scenario.net) {
            store.append(*p, dir, remote_host_of(p, dir))?;
        }
    }
    println!("store: {} packets", store.len());

    let channel = InProcessChannel::new();
    let policy = UpdatePolicy::Dum {
        t_duration: TrainSpan::Finite(3600.0),
        t_update: 3600.0,
    };
    let clock = (1..=hours).map(|k| k as f64 * 3600.0);
    let events = run_updater(
        &mut store,
        policy,
        AlgorithmSpec::with_defaults(AlgorithmKind::RandomForest, 8),
        &scenario.net,
        &channel,
        clock,
    );

    println!("update log:");
    for event in &events {
        println!("{}", serde_json::to_string(event)?);
    }
    let latest = channel.latest()?.expect("five updates published");
    println!(
        "\nlatest model: trained at t={} on {} ({} benign + {} malicious rows)",
        latest.trained_at,
        latest.train_window,
        latest.class_counts.benign,
        latest.class_counts.malicious
    );
    // Finite-span retention: everything older than the last window is gone.
    println!(
        "store after eviction: {} packets, horizon {}",
        store.len(),
        store.horizon()
    );
    Ok(())
}
