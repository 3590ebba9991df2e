//! Label remote hosts from honeypot/device contact.
//!
//! ```bash
//! cargo run --example label_hosts
//! ```

use driftguard::ingest::label_hosts;
use driftguard::synth::{generate_synthetic, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let scenario = generate_synthetic(&ScenarioConfig::separable(5, 3, 1800.0, 21))?;
    let labels = label_hosts(scenario.records.iter(), &scenario.net);

    println!(
        "{:<12} {:<10} {:>9} {:>8} {:>12}",
        "host", "label", "honeypot", "device", "first_seen"
    );
    for (host, entry) in labels.iter() {
        println!(
            "{:<12} {:<10} {:>9} {:>8} {:>12.3}",
            host.to_string(),
            entry.label.to_string(),
            entry.contacted_honeypot,
            entry.contacted_device,
            entry.first_seen
        );
    }
    let (benign, malicious) = labels.class_totals();
    println!("\n{benign} benign, {malicious} malicious");

    // Labels depend only on the contact set, so they agree with the
    // generator's ground truth by construction.
    for (host, want) in &scenario.truth {
        assert_eq!(labels.label_of(host), Some(*want));
    }
    println!("labels agree with the generator's ground truth");
    Ok(())
}
