//! Deterministic synthetic traffic scenarios.
//!
//! Each remote host follows a traffic pattern against its local peer:
//! benign hosts exchange steady bidirectional traffic with a device,
//! malicious hosts probe the honeypot. A scenario can switch the
//! malicious pattern at `shift_at` to emulate a change in attacker
//! behavior; the stock drift scenario is built so that the new pattern
//! looks benign along every axis the old pattern was separable on (port,
//! length, timing, TTL), while remaining separable from real benign
//! traffic on fresh axes.
//!
//! Timestamps are generated on a microsecond grid and composed into
//! seconds exactly like the pcap reader does, so a scenario survives a
//! pcap round trip bit-for-bit.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::compose_micros;
use crate::types::{HostKey, Label, NetConfig, PacketRecord, PROTO_TCP};

/// How one host talks to its local peer.
#[derive(Clone, Debug, PartialEq)]
pub struct TrafficPattern {
    /// Local service ports targeted by incoming packets.
    pub dst_ports: Vec<u16>,
    /// IP total length range (inclusive) for requests and replies.
    pub len_range: (u32, u32),
    /// Packets per burst; 1 means a steady stream.
    pub burst_len: u32,
    /// Uniform gap between packets inside a burst, seconds.
    pub intra_gap: (f64, f64),
    /// Uniform gap between bursts, seconds.
    pub inter_gap: (f64, f64),
    /// TTL of the remote host's packets as seen at the gateway.
    pub ttl: u8,
    pub proto: u8,
    /// Whether the local peer answers each packet.
    pub replies: bool,
}

/// Full description of a synthetic scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    /// Simulated length in seconds.
    pub duration: f64,
    pub benign_hosts: u32,
    pub benign: TrafficPattern,
    pub malicious_hosts: u32,
    pub malicious: TrafficPattern,
    /// Malicious hosts additionally probe a device at a quarter of their
    /// rate. They stay malicious (honeypot contact wins), but exercise
    /// the mixed-contact labeling path.
    pub malicious_probe_devices: bool,
    /// When the malicious pattern switches to `post_shift`.
    pub shift_at: Option<f64>,
    pub post_shift: Option<TrafficPattern>,
    pub rng_seed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// A generated scenario: time-ordered packets, the matching network
/// configuration, and each host's ground-truth role. The construction
/// guarantees that honeypot-contact labeling over the full stream agrees
/// with the truth map.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub records: Vec<PacketRecord>,
    pub net: NetConfig,
    pub truth: BTreeMap<HostKey, Label>,
}

const LOCAL_TTL: u8 = 64;
/// Replies follow their request by 5-50 ms.
const REPLY_DELAY_US: (u64, u64) = (5_000, 50_000);

impl TrafficPattern {
    fn validate(&self, name: &str) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidScenario(msg));
        if self.dst_ports.is_empty() {
            return err(format!("{name}: no destination ports"));
        }
        if self.len_range.0 < 20 || self.len_range.1 < self.len_range.0 {
            return err(format!("{name}: bad length range {:?}", self.len_range));
        }
        if self.burst_len == 0 {
            return err(format!("{name}: burst length must be positive"));
        }
        for (lo, hi) in [self.intra_gap, self.inter_gap] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return err(format!("{name}: bad gap range ({lo}, {hi})"));
            }
        }
        Ok(())
    }

    /// Steady large-packet service traffic on 443.
    pub fn benign_default() -> Self {
        TrafficPattern {
            dst_ports: vec![443],
            len_range: (600, 1400),
            burst_len: 1,
            intra_gap: (4.0, 12.0),
            inter_gap: (4.0, 12.0),
            ttl: LOCAL_TTL,
            proto: PROTO_TCP,
            replies: true,
        }
    }

    /// Tight bursts of tiny probes against telnet.
    pub fn scan_default() -> Self {
        TrafficPattern {
            dst_ports: vec![23],
            len_range: (40, 60),
            burst_len: 5,
            intra_gap: (0.2, 0.8),
            inter_gap: (30.0, 90.0),
            ttl: 48,
            proto: PROTO_TCP,
            replies: true,
        }
    }

    /// Post-shift attacker: new port, benign-looking sizes and timing,
    /// distinctive TTL. Evades any threshold learned against
    /// [`TrafficPattern::scan_default`] yet stays separable from benign
    /// traffic on port and TTL.
    pub fn shifted_scan_default() -> Self {
        TrafficPattern {
            dst_ports: vec![5555],
            len_range: (700, 1300),
            burst_len: 1,
            intra_gap: (4.0, 12.0),
            inter_gap: (4.0, 12.0),
            ttl: 200,
            proto: PROTO_TCP,
            replies: true,
        }
    }
}

impl ScenarioConfig {
    /// Separable scenario: benign service traffic vs. burst scanning,
    /// distinguishable on every feature axis, no behavior change.
    pub fn separable(
        benign_hosts: u32,
        malicious_hosts: u32,
        duration: f64,
        rng_seed: u64,
    ) -> Self {
        ScenarioConfig {
            duration,
            benign_hosts,
            benign: TrafficPattern::benign_default(),
            malicious_hosts,
            malicious: TrafficPattern::scan_default(),
            malicious_probe_devices: false,
            shift_at: None,
            post_shift: None,
            rng_seed,
        }
    }

    /// Drift scenario: scanning switches to the evasive post-shift
    /// pattern at `shift_at`.
    pub fn drift(
        benign_hosts: u32,
        malicious_hosts: u32,
        duration: f64,
        shift_at: f64,
        rng_seed: u64,
    ) -> Self {
        ScenarioConfig {
            shift_at: Some(shift_at),
            post_shift: Some(TrafficPattern::shifted_scan_default()),
            ..ScenarioConfig::separable(benign_hosts, malicious_hosts, duration, rng_seed)
        }
    }

    /// The network the generated traffic lives in: one /24 with a
    /// honeypot at .2 and eight devices at .10-.17.
    pub fn net_config() -> NetConfig {
        let devices = (10..18).map(|x| Ipv4Addr::new(192, 168, 1, x)).collect();
        NetConfig::new(
            vec!["192.168.1.0/24".parse().unwrap()],
            [Ipv4Addr::new(192, 168, 1, 2)].into_iter().collect(),
            devices,
        )
        .expect("static scenario network is valid")
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: &str| Err(SynthError::InvalidScenario(msg.to_string()));
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return err("duration must be positive");
        }
        if self.benign_hosts + self.malicious_hosts == 0 {
            return err("at least one host is required");
        }
        self.benign.validate("benign pattern")?;
        self.malicious.validate("malicious pattern")?;
        match (self.shift_at, &self.post_shift) {
            (Some(at), Some(pattern)) => {
                if !(at > 0.0 && at < self.duration) {
                    return err("shift_at must fall inside the scenario duration");
                }
                pattern.validate("post-shift pattern")?;
            }
            (None, None) => {}
            (Some(_), None) => return err("shift_at given without a post-shift pattern"),
            (None, Some(_)) => return err("post-shift pattern given without shift_at"),
        }
        Ok(())
    }
}

fn gap_us(rng: &mut ChaCha8Rng, range: (f64, f64)) -> u64 {
    let lo = (range.0 * 1e6).round() as u64;
    let hi = (range.1 * 1e6).round() as u64;
    rng.random_range(lo.max(1)..=hi.max(lo.max(1)))
}

fn pick_port(rng: &mut ChaCha8Rng, ports: &[u16]) -> u16 {
    if ports.len() == 1 {
        ports[0]
    } else {
        ports[rng.random_range(0..ports.len())]
    }
}

/// Expands one host's packet stream. `patterns` maps a timestamp to the
/// pattern in force at that moment; replies come from the local peer with
/// the local TTL.
#[allow(clippy::too_many_arguments)]
fn generate_host(
    rng: &mut ChaCha8Rng,
    out: &mut Vec<PacketRecord>,
    remote: Ipv4Addr,
    local: Ipv4Addr,
    duration_us: u64,
    shift_at_us: Option<u64>,
    pre: &TrafficPattern,
    post: Option<&TrafficPattern>,
) {
    let pattern_at = |t_us: u64| -> &TrafficPattern {
        match (shift_at_us, post) {
            (Some(at), Some(p)) if t_us >= at => p,
            _ => pre,
        }
    };
    // Stagger hosts so they do not tick in lockstep.
    let stagger_cap = gap_us(rng, pre.inter_gap);
    let mut t_us = rng.random_range(0..=stagger_cap);
    while t_us < duration_us {
        let pattern = pattern_at(t_us);
        let src_port = rng.random_range(49152..=u16::MAX);
        let dst_port = pick_port(rng, &pattern.dst_ports);
        let mut in_burst = 0;
        while in_burst < pattern.burst_len && t_us < duration_us {
            let len = rng.random_range(pattern.len_range.0..=pattern.len_range.1);
            out.push(PacketRecord {
                ts: compose_micros(t_us),
                src_addr: remote,
                dst_addr: local,
                src_port,
                dst_port,
                proto: pattern.proto,
                length: len,
                ttl: pattern.ttl,
            });
            if pattern.replies {
                let reply_at = t_us + rng.random_range(REPLY_DELAY_US.0..=REPLY_DELAY_US.1);
                if reply_at < duration_us {
                    let reply_len = rng.random_range(pattern.len_range.0..=pattern.len_range.1);
                    out.push(PacketRecord {
                        ts: compose_micros(reply_at),
                        src_addr: local,
                        dst_addr: remote,
                        src_port: dst_port,
                        dst_port: src_port,
                        proto: pattern.proto,
                        length: reply_len,
                        ttl: LOCAL_TTL,
                    });
                }
            }
            in_burst += 1;
            t_us += if in_burst < pattern.burst_len {
                gap_us(rng, pattern.intra_gap)
            } else {
                gap_us(rng, pattern.inter_gap)
            };
        }
    }
}

/// Generates the scenario's packet stream, time-ordered and reproducible:
/// the same seed always yields the same bytes.
pub fn generate_synthetic(cfg: &ScenarioConfig) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    let net = ScenarioConfig::net_config();
    let devices: Vec<Ipv4Addr> = net.device_addrs.iter().copied().collect();
    let honeypot = *net.honeypot_addrs.iter().next().expect("one honeypot");
    let duration_us = (cfg.duration * 1e6).round() as u64;
    let shift_at_us = cfg.shift_at.map(|s| (s * 1e6).round() as u64);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut records = Vec::new();
    let mut truth = BTreeMap::new();

    for i in 0..cfg.benign_hosts {
        let remote = Ipv4Addr::from(u32::from(Ipv4Addr::new(20, 0, 0, 0)) + 1 + i);
        let device = devices[i as usize % devices.len()];
        truth.insert(HostKey(remote), Label::Benign);
        generate_host(
            &mut rng,
            &mut records,
            remote,
            device,
            duration_us,
            None,
            &cfg.benign,
            None,
        );
    }
    for j in 0..cfg.malicious_hosts {
        let remote = Ipv4Addr::from(u32::from(Ipv4Addr::new(40, 0, 0, 0)) + 1 + j);
        truth.insert(HostKey(remote), Label::Malicious);
        generate_host(
            &mut rng,
            &mut records,
            remote,
            honeypot,
            duration_us,
            shift_at_us,
            &cfg.malicious,
            cfg.post_shift.as_ref(),
        );
        if cfg.malicious_probe_devices {
            let mut sparse = cfg.malicious.clone();
            sparse.inter_gap = (
                cfg.malicious.inter_gap.0 * 4.0,
                cfg.malicious.inter_gap.1 * 4.0,
            );
            let device = devices[j as usize % devices.len()];
            generate_host(
                &mut rng,
                &mut records,
                remote,
                device,
                duration_us,
                shift_at_us,
                &sparse,
                cfg.post_shift.as_ref(),
            );
        }
    }

    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok(Scenario {
        records,
        net,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::label_hosts;

    const HOUR: f64 = 3600.0;

    #[test]
    fn construction_matches_contact_labeling() {
        let cfg = ScenarioConfig::drift(4, 3, 2.0 * HOUR, HOUR, 11);
        let s = generate_synthetic(&cfg).unwrap();
        let labels = label_hosts(s.records.iter(), &s.net);
        assert_eq!(labels.len(), s.truth.len());
        for (host, want) in &s.truth {
            assert_eq!(labels.label_of(host), Some(*want), "host {host}");
        }
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let cfg = ScenarioConfig::separable(3, 2, HOUR, 7);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        crate::ingest::write_ndjson(&mut buf_a, &a.records).unwrap();
        crate::ingest::write_ndjson(&mut buf_b, &b.records).unwrap();
        assert!(!buf_a.is_empty());
        assert_eq!(buf_a, buf_b);
        let c = generate_synthetic(&ScenarioConfig::separable(3, 2, HOUR, 8)).unwrap();
        let mut buf_c = Vec::new();
        crate::ingest::write_ndjson(&mut buf_c, &c.records).unwrap();
        assert_ne!(buf_a, buf_c);
    }

    #[test]
    fn records_are_time_ordered_and_valid() {
        let cfg = ScenarioConfig::drift(3, 3, 2.0 * HOUR, HOUR, 3);
        let s = generate_synthetic(&cfg).unwrap();
        assert!(!s.records.is_empty());
        let mut prev = 0.0;
        for r in &s.records {
            r.validate().unwrap();
            assert!(r.ts >= prev);
            prev = r.ts;
            assert!(r.ts < 2.0 * HOUR);
        }
    }

    #[test]
    fn shift_moves_the_scan_port() {
        let cfg = ScenarioConfig::drift(2, 2, 2.0 * HOUR, HOUR, 5);
        let s = generate_synthetic(&cfg).unwrap();
        let count = |port: u16, pre: bool| {
            s.records
                .iter()
                .filter(|r| {
                    r.dst_port == port
                        && r.dst_addr == Ipv4Addr::new(192, 168, 1, 2)
                        && (r.ts < HOUR) == pre
                })
                .count()
        };
        assert!(count(23, true) > 0);
        assert_eq!(count(5555, true), 0);
        assert!(count(5555, false) > 0);
        assert_eq!(count(23, false), 0);
    }

    #[test]
    fn device_probing_scanners_stay_malicious_with_device_flag() {
        let mut cfg = ScenarioConfig::separable(2, 2, HOUR, 19);
        cfg.malicious_probe_devices = true;
        let s = generate_synthetic(&cfg).unwrap();
        let labels = label_hosts(s.records.iter(), &s.net);
        for (host, want) in &s.truth {
            assert_eq!(labels.label_of(host), Some(*want));
            if want.is_malicious() {
                let entry = labels.get(host).unwrap();
                assert!(entry.contacted_honeypot);
                assert!(entry.contacted_device, "scanner should also touch a device");
            }
        }
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let mut cfg = ScenarioConfig::separable(1, 1, HOUR, 0);
        cfg.shift_at = Some(2.0 * HOUR);
        cfg.post_shift = Some(TrafficPattern::shifted_scan_default());
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = ScenarioConfig::separable(0, 0, HOUR, 0);
        cfg.benign_hosts = 0;
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = ScenarioConfig::separable(1, 1, HOUR, 0);
        cfg.malicious.intra_gap = (0.0, 0.0);
        assert!(generate_synthetic(&cfg).is_err());

        let mut cfg = ScenarioConfig::separable(1, 1, HOUR, 0);
        cfg.shift_at = Some(HOUR / 2.0);
        assert!(matches!(
            generate_synthetic(&cfg),
            Err(SynthError::InvalidScenario(_))
        ));
    }

    /// The drift construction promise: post-shift malicious traffic sits
    /// on the benign side of every axis that separated the pre-shift
    /// pattern, and stays separable on port and TTL.
    #[test]
    fn drift_geometry_holds() {
        let pre = TrafficPattern::scan_default();
        let post = TrafficPattern::shifted_scan_default();
        let benign = TrafficPattern::benign_default();
        // Old separating axes now overlap benign behavior.
        assert_eq!(post.intra_gap, benign.intra_gap);
        assert!(post.len_range.0 >= benign.len_range.0);
        assert!(post.len_range.1 <= benign.len_range.1);
        assert!(post.ttl > benign.ttl && pre.ttl < benign.ttl);
        assert!(post.dst_ports[0] > benign.dst_ports[0]);
        assert!(pre.dst_ports[0] < benign.dst_ports[0]);
    }
}
