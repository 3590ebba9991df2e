//! Drive the gateway by hand: train on the first hour, detect over the
//! second, inspect the malicious list and the packet policy.
//!
//! ```bash
//! cargo run --example gateway_detection
//! ```

use driftguard::featurize::build_dataset;
use driftguard::gateway::{Classification, Gateway, HandlingPolicy, PacketAction};
use driftguard::ingest::TrafficStore;
use driftguard::learn::{train, AlgorithmKind, AlgorithmSpec};
use driftguard::synth::{generate_synthetic, ScenarioConfig};
use driftguard::types::{direction_of, remote_host_of, TimeWindow};
use std::sync::Arc;

fn main() -> anyhow::Result<()> {
    let scenario = generate_synthetic(&ScenarioConfig::separable(5, 4, 7200.0, 17))?;

    // Hour one becomes training data.
    let mut store = TrafficStore::new();
    for p in scenario.records.iter().filter(|p| p.ts < 3600.0) {
        if let Some(dir) = direction_of(p, &scenario.net) {
            store.append(*p, dir, remote_host_of(p, dir))?;
        }
    }
    let ds = build_dataset(&store, TimeWindow::new(0.0, 3600.0), &scenario.net)?;
    let model = train(
        &AlgorithmSpec::with_defaults(AlgorithmKind::DecisionTree, 2),
        &ds,
    )?;

    // Hour two is observed live by the gateway.
    let mut gw = Gateway::new(scenario.net.clone(), 3600.0, HandlingPolicy::FilterDrop);
    gw.swap_model(Arc::new(model))?;
    for p in scenario.records.iter().filter(|p| p.ts >= 3600.0) {
        gw.observe(p);
    }
    let verdicts = match gw.classify_active_hosts(7200.0)? {
        Classification::Verdicts(v) => v,
        Classification::Deferred { .. } => unreachable!("a model is installed"),
    };

    println!("verdicts at t=7200:");
    for v in &verdicts {
        println!(
            "  {:<12} {:<10} score {:.2}",
            v.host.to_string(),
            v.label.to_string(),
            v.score
        );
        assert_eq!(scenario.truth.get(&v.host), Some(&v.label));
    }

    let mut csv = Vec::new();
    gw.list.write_csv(&mut csv)?;
    println!("\nmalicious list:\n{}", String::from_utf8(csv)?);

    // Once listed, the drop policy bites on the very next packet.
    let scanner = verdicts
        .iter()
        .find(|v| v.label.is_malicious())
        .unwrap()
        .host;
    let mut probe = scenario
        .records
        .iter()
        .find(|p| p.src_addr == scanner.0)
        .copied()
        .unwrap();
    probe.ts = 7201.0;
    assert_eq!(gw.apply_policy(&probe), PacketAction::Drop);
    println!("next packet from {scanner} would be dropped");
    Ok(())
}
