//! Synthesize a drift scenario and write it out as NDJSON, pcap, and a
//! flag-compatible net config.
//!
//! ```bash
//! cargo run --example generate_scenario
//! ```

use std::fs::File;
use std::io::BufWriter;

use driftguard::ingest::{write_ndjson, write_pcap};
use driftguard::synth::{generate_synthetic, ScenarioConfig};

fn main() -> anyhow::Result<()> {
    // Ten simulated hours, 12 benign + 10 malicious hosts, attacker
    // behavior shifts at hour five.
    let cfg = ScenarioConfig::drift(12, 10, 36_000.0, 18_000.0, 7);
    let scenario = generate_synthetic(&cfg)?;

    let out = std::env::temp_dir().join("driftguard-scenario");
    std::fs::create_dir_all(&out)?;
    write_ndjson(
        BufWriter::new(File::create(out.join("packets.ndjson"))?),
        &scenario.records,
    )?;
    write_pcap(
        BufWriter::new(File::create(out.join("packets.pcap"))?),
        &scenario.records,
    )?;

    println!(
        "{} packets across {} hosts written to {}",
        scenario.records.len(),
        scenario.truth.len(),
        out.display()
    );
    println!("local networks: {:?}", scenario.net.local_nets);
    println!(
        "honeypot: {:?}  devices: {} addresses",
        scenario.net.honeypot_addrs,
        scenario.net.device_addrs.len()
    );
    let (benign, malicious) = scenario.truth.values().fold((0, 0), |(b, m), l| {
        if l.is_malicious() {
            (b, m + 1)
        } else {
            (b + 1, m)
        }
    });
    println!("ground truth: {benign} benign, {malicious} malicious hosts");
    Ok(())
}
