//! Thin command-line front end over the library: generate scenarios,
//! convert captures, train one-shot models, replay evaluations, and
//! re-emit saved reports. Exit code 0 on success, 2 on any input error.

use std::fs::File;
use std::io::{BufWriter, Read};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use driftguard::adapt::{TrainSpan, UpdatePolicy};
use driftguard::ingest::{read_ndjson, read_pcap, write_ndjson, write_pcap, IngestCounters};
use driftguard::learn::{serialize_model, train, AlgorithmKind, AlgorithmSpec};
use driftguard::replay::{replay, ReplayOptions};
use driftguard::report::{emit_report, load_report};
use driftguard::synth::{generate_synthetic, ScenarioConfig};
use driftguard::types::{Cidr, NetConfig, PacketRecord, TimeWindow};
use driftguard::{build_dataset, TrafficStore};

#[derive(Parser)]
#[command(
    name = "driftguard",
    version,
    about = "Honeypot-labeled traffic anomaly detection with sliding-window model updates"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario (NDJSON packets + matching config).
    Gen(GenArgs),
    /// Convert a pcap capture to NDJSON packets.
    Ingest(IngestArgs),
    /// Train one model on a whole capture and save it.
    Train(TrainArgs),
    /// Replay a capture under an update policy and emit the evaluation
    /// report.
    Replay(ReplayArgs),
    /// Re-emit report files from a saved report.json.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct NetArgs {
    /// Local networks in CIDR form (comma-separated or repeated).
    /// Required here or via --config.
    #[arg(long = "local-net", value_delimiter = ',')]
    local_net: Vec<Cidr>,
    /// Honeypot addresses; contact means malicious.
    #[arg(long, value_delimiter = ',')]
    honeypot: Vec<Ipv4Addr>,
    /// Device addresses; exclusive contact means benign.
    #[arg(long, value_delimiter = ',')]
    devices: Vec<Ipv4Addr>,
}

impl NetArgs {
    fn to_config(&self) -> Result<NetConfig> {
        if self.local_net.is_empty() {
            bail!("no local networks given (use --local-net or a --config file)");
        }
        if self.honeypot.is_empty() && self.devices.is_empty() {
            bail!("labeling needs at least one --honeypot or --devices address");
        }
        NetConfig::new(
            self.local_net.clone(),
            self.honeypot.iter().copied().collect(),
            self.devices.iter().copied().collect(),
        )
        .map_err(|e| anyhow!("network configuration: {e}"))
    }
}

#[derive(Args)]
struct GenArgs {
    /// Scenario length in seconds.
    #[arg(long, default_value_t = 36_000.0)]
    duration: f64,
    /// Number of benign remote hosts.
    #[arg(long, default_value_t = 12)]
    benign: u32,
    /// Number of malicious remote hosts.
    #[arg(long, default_value_t = 10)]
    malicious: u32,
    /// When the malicious pattern shifts (omit for a stationary scenario).
    #[arg(long = "shift-at")]
    shift_at: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the scenario as a pcap file.
    #[arg(long)]
    pcap: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Input pcap file.
    #[arg(long)]
    input: PathBuf,
    /// Output NDJSON file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input capture (pcap or NDJSON, detected by content).
    #[arg(long)]
    input: PathBuf,
    /// Algorithm: knn, dt, rf, gbdt.
    #[arg(long, default_value = "dt")]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    /// Output model file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Input capture (pcap or NDJSON, detected by content).
    #[arg(long)]
    input: PathBuf,
    /// Update policy: scm or dum.
    #[arg(long, default_value = "dum")]
    policy: String,
    /// Training window length in seconds, or `inf` (DUM only).
    #[arg(long = "t-duration", default_value = "3600")]
    t_duration: String,
    /// Retraining interval in seconds (DUM only).
    #[arg(long = "t-update", default_value_t = 3600.0)]
    t_update: f64,
    /// Algorithm: knn, dt, rf, gbdt.
    #[arg(long, default_value = "dt")]
    algo: String,
    /// Evaluation window length in seconds.
    #[arg(long = "eval-window", default_value_t = 3600.0)]
    eval_window: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    net: NetArgs,
    /// Ports listed individually in the distribution.
    #[arg(long = "top-ports", default_value_t = 6)]
    top_ports: usize,
    /// Zero out measured training times so repeated runs emit identical
    /// reports.
    #[arg(long = "no-timing")]
    no_timing: bool,
    /// key=value file whose entries override the flags above.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the report files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// A report.json produced by `replay`.
    #[arg(long)]
    input: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Ingest(args) => cmd_ingest(args),
        Command::Train(args) => cmd_train(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let cfg = match args.shift_at {
        Some(at) => {
            ScenarioConfig::drift(args.benign, args.malicious, args.duration, at, args.seed)
        }
        None => ScenarioConfig::separable(args.benign, args.malicious, args.duration, args.seed),
    };
    let scenario = generate_synthetic(&cfg)?;
    std::fs::create_dir_all(&args.out)?;

    let ndjson_path = args.out.join("packets.ndjson");
    write_ndjson(
        BufWriter::new(File::create(&ndjson_path)?),
        &scenario.records,
    )?;
    if args.pcap {
        let pcap_path = args.out.join("packets.pcap");
        write_pcap(BufWriter::new(File::create(&pcap_path)?), &scenario.records)?;
    }

    // Flag-compatible key=value config for `replay --config`.
    let mut conf = String::new();
    let nets: Vec<String> = scenario
        .net
        .local_nets
        .iter()
        .map(|c| c.to_string())
        .collect();
    conf.push_str(&format!("local-net={}\n", nets.join(",")));
    let hp: Vec<String> = scenario
        .net
        .honeypot_addrs
        .iter()
        .map(|a| a.to_string())
        .collect();
    conf.push_str(&format!("honeypot={}\n", hp.join(",")));
    let dev: Vec<String> = scenario
        .net
        .device_addrs
        .iter()
        .map(|a| a.to_string())
        .collect();
    conf.push_str(&format!("devices={}\n", dev.join(",")));
    std::fs::write(args.out.join("net.conf"), conf)?;

    let mut truth = String::from("host,label\n");
    for (host, label) in &scenario.truth {
        truth.push_str(&format!("{host},{label}\n"));
    }
    std::fs::write(args.out.join("truth.csv"), truth)?;

    println!(
        "generated {} packets from {} hosts over {} s into {}",
        scenario.records.len(),
        scenario.truth.len(),
        args.duration,
        args.out.display()
    );
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let (records, counters) =
        read_pcap(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    write_ndjson(BufWriter::new(File::create(&args.out)?), &records)?;
    report_counters(&counters);
    println!("wrote {} packets to {}", records.len(), args.out.display());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let algo_kind: AlgorithmKind = args.algo.parse().map_err(|e: String| anyhow!(e))?;
    let cfg = args.net.to_config()?;
    let (records, counters) = read_capture(&args.input)?;
    report_counters(&counters);
    if records.is_empty() {
        bail!("no usable packets in {}", args.input.display());
    }
    let mut store = TrafficStore::new();
    for p in &records {
        if let Some(dir) = driftguard::direction_of(p, &cfg) {
            store
                .append(*p, dir, driftguard::types::remote_host_of(p, dir))
                .map_err(|e| anyhow!("input must be time-ordered: {e}"))?;
        }
    }
    let last_ts = records.last().map(|r| r.ts).unwrap_or(0.0);
    let window = TimeWindow::new(0.0, last_ts + 1e-6);
    let ds = build_dataset(&store, window, &cfg)?;
    let spec = AlgorithmSpec::with_defaults(algo_kind, args.seed);
    let model = train(&spec, &ds)?;
    let bytes = serialize_model(&model);
    std::fs::write(&args.out, &bytes)?;
    println!(
        "trained {} on {} rows (benign {}, malicious {}) in {:.4} s; wrote {} bytes to {}",
        algo_kind,
        ds.len(),
        ds.class_counts.benign,
        ds.class_counts.malicious,
        model.train_seconds,
        bytes.len(),
        args.out.display()
    );
    if model.is_single_class() {
        eprintln!("warning: training data held a single class; the model is a constant predictor");
    }
    Ok(())
}

fn cmd_replay(mut args: ReplayArgs) -> Result<()> {
    if let Some(config) = args.config.take() {
        apply_config(&config, &mut args)?;
    }
    let algo_kind: AlgorithmKind = args.algo.parse().map_err(|e: String| anyhow!(e))?;
    let policy = parse_policy(&args.policy, &args.t_duration, args.t_update)?;
    let cfg = args.net.to_config()?;
    let (records, counters) = read_capture(&args.input)?;
    report_counters(&counters);

    let opts = ReplayOptions {
        eval_window: args.eval_window,
        top_ports: args.top_ports,
        measure_training_time: !args.no_timing,
        ..ReplayOptions::default()
    };
    let spec = AlgorithmSpec::with_defaults(algo_kind, args.seed);
    let report = replay(&records, None, policy, spec, &cfg, &opts)?;
    let files = emit_report(&report, &args.out)?;

    println!(
        "replayed {} packets: {} windows classified, {} deferred, {} updates ({} published)",
        records.len(),
        report.windows.len(),
        report.deferred.len(),
        report.updates.len(),
        report.updates.iter().filter(|u| u.published).count()
    );
    if let Some(mean) = report.mean_f1() {
        println!("mean F1 over classified windows: {mean:.4}");
    }
    for w in &report.windows {
        println!(
            "  [{:>9}, {:>9})  f1={:.4}  hosts={}",
            w.window.start, w.window.end, w.metrics.f1, w.active_hosts
        );
    }
    println!("listed {} malicious addresses", report.malicious_list.len());
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let report =
        load_report(&args.input).with_context(|| format!("loading {}", args.input.display()))?;
    let files = emit_report(&report, &args.out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn parse_policy(policy: &str, t_duration: &str, t_update: f64) -> Result<UpdatePolicy> {
    let span = match t_duration.trim() {
        "inf" | "INF" | "Inf" => TrainSpan::Infinite,
        secs => TrainSpan::Finite(
            secs.parse::<f64>()
                .with_context(|| format!("t-duration {secs:?} is neither seconds nor `inf`"))?,
        ),
    };
    let policy = match policy.to_ascii_lowercase().as_str() {
        "scm" => match span {
            TrainSpan::Finite(d) => UpdatePolicy::Scm { t_duration: d },
            TrainSpan::Infinite => bail!("scm requires a finite t-duration"),
        },
        "dum" => UpdatePolicy::Dum {
            t_duration: span,
            t_update,
        },
        other => bail!("unknown policy {other:?} (expected scm or dum)"),
    };
    policy.validate()?;
    Ok(policy)
}

/// Applies `key=value` lines over already-parsed flags. Keys mirror the
/// long flag names; config entries win over command-line values.
fn apply_config(path: &Path, args: &mut ReplayArgs) -> Result<()> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), no + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let parse_list = |v: &str| -> Result<Vec<Ipv4Addr>> {
            v.split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<Ipv4Addr>()
                        .map_err(|e| anyhow!("{key}: {e}"))
                })
                .collect()
        };
        match key {
            "policy" => args.policy = value.to_string(),
            "t-duration" => args.t_duration = value.to_string(),
            "t-update" => args.t_update = value.parse().with_context(|| key.to_string())?,
            "algo" => args.algo = value.to_string(),
            "eval-window" => args.eval_window = value.parse().with_context(|| key.to_string())?,
            "seed" => args.seed = value.parse().with_context(|| key.to_string())?,
            "top-ports" => args.top_ports = value.parse().with_context(|| key.to_string())?,
            "local-net" => {
                args.net.local_net = value
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.trim().parse::<Cidr>().map_err(|e| anyhow!("{key}: {e}")))
                    .collect::<Result<_>>()?;
            }
            "honeypot" => args.net.honeypot = parse_list(value)?,
            "devices" => args.net.devices = parse_list(value)?,
            "out" => args.out = PathBuf::from(value),
            other => bail!(
                "{}:{}: unknown config key {other:?}",
                path.display(),
                no + 1
            ),
        }
    }
    Ok(())
}

/// Reads a capture, sniffing pcap magic against NDJSON content.
fn read_capture(path: &Path) -> Result<(Vec<PacketRecord>, IngestCounters)> {
    let mut head = [0u8; 4];
    let n = File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read(&mut head)?;
    let is_pcap = n == 4
        && matches!(
            u32::from_le_bytes(head),
            0xA1B2_C3D4 | 0xD4C3_B2A1 | 0xA1B2_3C4D | 0x4D3C_B2A1
        );
    let result = if is_pcap {
        read_pcap(path)?
    } else {
        read_ndjson(path)?
    };
    Ok(result)
}

fn report_counters(c: &IngestCounters) {
    let skipped = c.non_ipv4 + c.ipv6 + c.truncated + c.invalid + c.malformed_lines;
    if skipped > 0 {
        eprintln!(
            "skipped {} inputs (non-IPv4 {}, IPv6 {}, truncated {}, invalid {}, malformed lines {})",
            skipped, c.non_ipv4, c.ipv6, c.truncated, c.invalid, c.malformed_lines
        );
    }
}
