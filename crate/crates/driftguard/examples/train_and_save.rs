//! Train a model, save it in the binary transfer format, reload it, and
//! check the round trip preserves every prediction.
//!
//! ```bash
//! cargo run --example train_and_save
//! ```

use driftguard::featurize::build_dataset;
use driftguard::ingest::TrafficStore;
use driftguard::learn::{deserialize_model, serialize_model, train, AlgorithmKind, AlgorithmSpec};
use driftguard::synth::{generate_synthetic, ScenarioConfig};
use driftguard::types::{direction_of, remote_host_of, TimeWindow};

fn main() -> anyhow::Result<()> {
    let scenario = generate_synthetic(&ScenarioConfig::separable(6, 5, 3600.0, 13))?;
    let mut store = TrafficStore::new();
    for p in &scenario.records {
        if let Some(dir) = direction_of(p, &scenario.net) {
            store.append(*p, dir, remote_host_of(p, dir))?;
        }
    }
    let ds = build_dataset(&store, TimeWindow::new(0.0, 3600.0), &scenario.net)?;

    for kind in [
        AlgorithmKind::Knn,
        AlgorithmKind::DecisionTree,
        AlgorithmKind::RandomForest,
        AlgorithmKind::Gbdt,
    ] {
        let spec = AlgorithmSpec::with_defaults(kind, 99);
        let model = train(&spec, &ds)?;
        let bytes = serialize_model(&model);

        let path = std::env::temp_dir().join(format!("driftguard-{kind}.sadm"));
        std::fs::write(&path, &bytes)?;
        let reloaded = deserialize_model(&std::fs::read(&path)?)?;

        let mut agree = 0;
        for row in &ds.rows {
            let a = model.predict(&row.vector)?;
            let b = reloaded.predict(&row.vector)?;
            assert_eq!(a, b);
            if a.0 == row.label {
                agree += 1;
            }
        }
        println!(
            "{kind:>4}: {} bytes, trained in {:.5} s, {}/{} training rows reproduced, round trip exact",
            bytes.len(),
            model.train_seconds,
            agree,
            ds.len()
        );
    }
    Ok(())
}
