//! Serializes an [`EvaluationReport`] to disk.
//!
//! Four flat files for plotting plus the full report as JSON so a run can
//! be re-emitted later without replaying. Output is a pure function of
//! the report: emitting the same report twice produces identical bytes.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::replay::EvaluationReport;

/// File names written by [`emit_report`].
pub const F1_TRANSITIONS_CSV: &str = "f1_transitions.csv";
pub const PORT_DISTRIBUTION_CSV: &str = "port_distribution.csv";
pub const TRAINING_TIMES_CSV: &str = "training_times.csv";
pub const UPDATES_NDJSON: &str = "updates.ndjson";
pub const MALICIOUS_LIST_CSV: &str = "malicious_list.csv";
pub const REPORT_JSON: &str = "report.json";

/// Writes the report files into `dir` (created if missing) and returns
/// their paths.
pub fn emit_report(report: &EvaluationReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let path = dir.join(F1_TRANSITIONS_CSV);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "window_start,window_end,tp,fp,fn,tn,f1,active_hosts")?;
    for wr in &report.windows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            wr.window.start,
            wr.window.end,
            wr.metrics.true_positives,
            wr.metrics.false_positives,
            wr.metrics.false_negatives,
            wr.metrics.true_negatives,
            wr.metrics.f1,
            wr.active_hosts
        )?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(PORT_DISTRIBUTION_CSV);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "dst_port,flows,fraction")?;
    for share in &report.port_distribution.entries {
        match share.port {
            Some(port) => writeln!(w, "{port},{},{}", share.flows, share.fraction)?,
            None => writeln!(w, "others,{},{}", share.flows, share.fraction)?,
        }
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(TRAINING_TIMES_CSV);
    let mut w = BufWriter::new(File::create(&path)?);
    writeln!(w, "t,rows,seconds")?;
    for tt in &report.training_times {
        writeln!(w, "{},{},{}", tt.t, tt.rows, tt.seconds)?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(UPDATES_NDJSON);
    let mut w = BufWriter::new(File::create(&path)?);
    for event in &report.updates {
        serde_json::to_writer(&mut w, event)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    written.push(path);

    let path = dir.join(MALICIOUS_LIST_CSV);
    let mut w = BufWriter::new(File::create(&path)?);
    report.malicious_list.write_csv(&mut w)?;
    w.flush()?;
    written.push(path);

    let path = dir.join(REPORT_JSON);
    let mut w = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.write_all(b"\n")?;
    w.flush()?;
    written.push(path);

    Ok(written)
}

/// Loads a report previously written by [`emit_report`].
pub fn load_report(path: &Path) -> io::Result<EvaluationReport> {
    let file = File::open(path)?;
    serde_json::from_reader(io::BufReader::new(file)).map_err(io::Error::other)
}
