//! Per-flow destination-port shares of incoming traffic, before and
//! after a behavior shift.
//!
//! ```bash
//! cargo run --example port_distribution
//! ```

use driftguard::replay::port_distribution;
use driftguard::synth::{generate_synthetic, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    let scenario = generate_synthetic(&ScenarioConfig::drift(8, 6, 7200.0, 3600.0, 3))?;
    let dist = port_distribution(scenario.records.iter(), &scenario.net, 4);

    println!("{} distinct incoming flows", dist.total_flows);
    println!("{:>9} {:>8} {:>10}", "dst_port", "flows", "share");
    for share in &dist.entries {
        let port = share
            .port
            .map(|p| p.to_string())
            .unwrap_or_else(|| "others".to_string());
        println!(
            "{:>9} {:>8} {:>9.1}%",
            port,
            share.flows,
            share.fraction * 100.0
        );
    }

    let total: f64 = dist.entries.iter().map(|e| e.fraction).sum();
    assert!((total - 1.0).abs() < 1e-9);
    // Both the old scan port (23) and the new one (5555) show up.
    let ports: Vec<u16> = dist.entries.iter().filter_map(|e| e.port).collect();
    assert!(ports.contains(&23) && ports.contains(&5555));
    println!("\nshift is visible: ports 23 and 5555 both hold flow share");
    Ok(())
}
