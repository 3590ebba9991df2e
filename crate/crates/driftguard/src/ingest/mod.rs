//! Packet input, host labeling, and the retained traffic store.
//!
//! Two file formats are supported: classic pcap (Ethernet link layer,
//! microsecond or nanosecond timestamps) and NDJSON with one packet object
//! per line. Both normalize into [`PacketRecord`]s. Ground-truth labels are
//! derived from which local addresses a remote host touched: honeypot
//! contact means malicious, device-only contact means benign.

mod ndjson;
mod pcap;

pub use ndjson::{read_ndjson, write_ndjson, NdjsonReader};
pub use pcap::{read_pcap, write_pcap, write_pcap_with, PcapReader, TsPrecision};

/// Composes a timestamp from whole microseconds exactly as the pcap
/// reader does, so timestamps built this way survive a pcap round trip
/// bit-for-bit.
pub fn compose_micros(us: u64) -> f64 {
    pcap::compose_ts(
        (us / 1_000_000) as u32,
        (us % 1_000_000) as u32,
        TsPrecision::Micro,
    )
}

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::types::{
    direction_of, local_addr_of, remote_host_of, Direction, HostKey, Label, NetConfig,
    PacketRecord, TimeWindow,
};

/// Errors raised while opening or reading packet input files.
#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a pcap file (magic {0:#010x})")]
    BadMagic(u32),
    #[error("pcap global header truncated")]
    TruncatedHeader,
    #[error("unsupported pcap link type {0} (only Ethernet is supported)")]
    UnsupportedLinkType(u32),
}

/// Running tallies of what a reader skipped. Skips never abort a read;
/// they are counted so callers can report input quality.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IngestCounters {
    /// Records successfully yielded.
    pub packets: u64,
    /// Frames that were not IPv4 (ARP, VLAN-tagged, unknown ethertypes).
    pub non_ipv4: u64,
    /// IPv6 frames, counted separately from other non-IPv4 traffic.
    pub ipv6: u64,
    /// Frames whose captured bytes end before the headers do.
    pub truncated: u64,
    /// Records that decoded but failed [`PacketRecord::validate`].
    pub invalid: u64,
    /// NDJSON lines that failed to parse.
    pub malformed_lines: u64,
}

/// What is known about one remote host's contacts in a record set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HostLabelEntry {
    pub label: Label,
    pub contacted_honeypot: bool,
    pub contacted_device: bool,
    /// Earliest timestamp at which the host appeared.
    pub first_seen: f64,
}

/// Ground-truth labels for every remote host that touched a honeypot or
/// device address. Hosts that contacted neither are absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HostLabelMap {
    entries: BTreeMap<HostKey, HostLabelEntry>,
}

impl HostLabelMap {
    pub fn get(&self, host: &HostKey) -> Option<&HostLabelEntry> {
        self.entries.get(host)
    }

    pub fn label_of(&self, host: &HostKey) -> Option<Label> {
        self.entries.get(host).map(|e| e.label)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&HostKey, &HostLabelEntry)> {
        self.entries.iter()
    }

    pub fn class_totals(&self) -> (u64, u64) {
        let malicious = self
            .entries
            .values()
            .filter(|e| e.label.is_malicious())
            .count() as u64;
        (self.entries.len() as u64 - malicious, malicious)
    }
}

/// Labels remote hosts by which local addresses they exchanged packets with.
///
/// Honeypot contact wins: a host that touched both a honeypot and a device
/// is labeled malicious (with `contacted_device` still set). Hosts whose
/// local peers were neither honeypot nor device are left out of the map;
/// there is no ground truth for them. The result depends only on the set of
/// contacts, so record order does not matter.
pub fn label_hosts<'a, I>(records: I, cfg: &NetConfig) -> HostLabelMap
where
    I: IntoIterator<Item = &'a PacketRecord>,
{
    struct Contact {
        honeypot: bool,
        device: bool,
        first_seen: f64,
    }
    let mut seen: BTreeMap<HostKey, Contact> = BTreeMap::new();
    for p in records {
        let Some(dir) = direction_of(p, cfg) else {
            continue;
        };
        let host = remote_host_of(p, dir);
        let local = local_addr_of(p, dir);
        let c = seen.entry(host).or_insert(Contact {
            honeypot: false,
            device: false,
            first_seen: p.ts,
        });
        c.honeypot |= cfg.is_honeypot(local);
        c.device |= cfg.is_device(local);
        if p.ts < c.first_seen {
            c.first_seen = p.ts;
        }
    }
    let entries = seen
        .into_iter()
        .filter(|(_, c)| c.honeypot || c.device)
        .map(|(host, c)| {
            let label = if c.honeypot {
                Label::Malicious
            } else {
                Label::Benign
            };
            (
                host,
                HostLabelEntry {
                    label,
                    contacted_honeypot: c.honeypot,
                    contacted_device: c.device,
                    first_seen: c.first_seen,
                },
            )
        })
        .collect();
    HostLabelMap { entries }
}

/// A packet together with its resolved direction and remote host.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoredPacket {
    pub record: PacketRecord,
    pub direction: Direction,
    pub host: HostKey,
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("timestamp {ts} precedes the last appended timestamp {last}")]
    OutOfOrderTimestamp { ts: f64, last: f64 },
}

/// Time-ordered retention buffer for classified packets.
///
/// Appends must be time-ordered (ties allowed); eviction removes from the
/// front and advances the horizon, never rewinding it. Window slices use
/// binary search, so reads stay cheap as the store grows.
#[derive(Clone, Debug, Default)]
pub struct TrafficStore {
    records: VecDeque<StoredPacket>,
    horizon: f64,
    last_ts: Option<f64>,
    /// Appends rejected for violating time order.
    pub rejected_out_of_order: u64,
}

impl TrafficStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one classified packet. Rejects (and counts) records older
    /// than the newest already stored or older than the horizon; either
    /// would break the time-ordering invariant.
    pub fn append(
        &mut self,
        record: PacketRecord,
        direction: Direction,
        host: HostKey,
    ) -> Result<(), StoreError> {
        let floor = self.last_ts.map_or(self.horizon, |l| l.max(self.horizon));
        if record.ts < floor {
            self.rejected_out_of_order += 1;
            return Err(StoreError::OutOfOrderTimestamp {
                ts: record.ts,
                last: floor,
            });
        }
        self.last_ts = Some(record.ts);
        self.records.push_back(StoredPacket {
            record,
            direction,
            host,
        });
        Ok(())
    }

    /// Drops all records with `ts < t` and moves the horizon up to `t`.
    /// Calls with `t` at or below the current horizon are no-ops.
    pub fn evict_before(&mut self, t: f64) {
        if t <= self.horizon {
            return;
        }
        self.horizon = t;
        while let Some(front) = self.records.front() {
            if front.record.ts < t {
                self.records.pop_front();
            } else {
                break;
            }
        }
    }

    /// Oldest timestamp still retained.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records with `ts` inside `window`, in time order.
    pub fn range(&self, window: TimeWindow) -> impl Iterator<Item = &StoredPacket> {
        let lo = self.records.partition_point(|s| s.record.ts < window.start);
        let hi = self.records.partition_point(|s| s.record.ts < window.end);
        self.records.range(lo..hi)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredPacket> {
        self.records.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::PROTO_TCP;
    use proptest::prelude::*;
    use std::net::Ipv4Addr;

    fn ip(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    fn cfg() -> NetConfig {
        NetConfig::new(
            vec!["192.168.1.0/24".parse().unwrap()],
            [ip("192.168.1.2")].into_iter().collect(),
            [ip("192.168.1.20")].into_iter().collect(),
        )
        .unwrap()
    }

    fn pkt(ts: f64, src: &str, dst: &str) -> PacketRecord {
        PacketRecord {
            ts,
            src_addr: ip(src),
            dst_addr: ip(dst),
            src_port: 40000,
            dst_port: 23,
            proto: PROTO_TCP,
            length: 60,
            ttl: 51,
        }
    }

    #[test]
    fn honeypot_contact_labels_malicious() {
        let records = [pkt(1.0, "5.5.5.5", "192.168.1.2")];
        let map = label_hosts(records.iter(), &cfg());
        let e = map.get(&HostKey(ip("5.5.5.5"))).unwrap();
        assert_eq!(e.label, Label::Malicious);
        assert!(e.contacted_honeypot);
        assert!(!e.contacted_device);
    }

    #[test]
    fn device_only_contact_labels_benign() {
        let records = [
            pkt(1.0, "6.6.6.6", "192.168.1.20"),
            pkt(1.5, "192.168.1.20", "6.6.6.6"),
        ];
        let map = label_hosts(records.iter(), &cfg());
        let e = map.get(&HostKey(ip("6.6.6.6"))).unwrap();
        assert_eq!(e.label, Label::Benign);
        assert!(e.contacted_device);
    }

    #[test]
    fn mixed_contact_is_malicious_with_device_flag() {
        let records = [
            pkt(1.0, "7.7.7.7", "192.168.1.20"),
            pkt(2.0, "7.7.7.7", "192.168.1.2"),
        ];
        let map = label_hosts(records.iter(), &cfg());
        let e = map.get(&HostKey(ip("7.7.7.7"))).unwrap();
        assert_eq!(e.label, Label::Malicious);
        assert!(e.contacted_honeypot);
        assert!(e.contacted_device);
        assert_eq!(e.first_seen, 1.0);
    }

    /// All four contact combinations: neither, device only, honeypot only, both.
    #[test]
    fn all_contact_combinations() {
        let c = cfg();
        let other_local = ip("192.168.1.99"); // local but neither honeypot nor device
        let cases = [
            (false, false, None),
            (true, false, Some(Label::Benign)),
            (false, true, Some(Label::Malicious)),
            (true, true, Some(Label::Malicious)),
        ];
        for (dev, hp, expect) in cases {
            let mut records = vec![pkt(0.5, "9.9.9.9", "192.168.1.99")];
            let _ = other_local;
            if dev {
                records.push(pkt(1.0, "9.9.9.9", "192.168.1.20"));
            }
            if hp {
                records.push(pkt(2.0, "9.9.9.9", "192.168.1.2"));
            }
            let map = label_hosts(records.iter(), &c);
            assert_eq!(
                map.label_of(&HostKey(ip("9.9.9.9"))),
                expect,
                "dev={dev} hp={hp}"
            );
        }
    }

    #[test]
    fn class_totals_count_each_side() {
        let records = [
            pkt(1.0, "5.5.5.5", "192.168.1.2"),
            pkt(1.0, "6.6.6.6", "192.168.1.20"),
            pkt(1.0, "6.6.6.7", "192.168.1.20"),
        ];
        let map = label_hosts(records.iter(), &cfg());
        assert_eq!(map.class_totals(), (2, 1));
    }

    #[test]
    fn store_append_then_evict_keeps_half_open_tail() {
        let c = cfg();
        let mut store = TrafficStore::new();
        for ts in [1.0, 2.0, 3.0] {
            let p = pkt(ts, "5.5.5.5", "192.168.1.2");
            let d = direction_of(&p, &c).unwrap();
            store.append(p, d, remote_host_of(&p, d)).unwrap();
        }
        store.evict_before(2.0);
        let kept: Vec<f64> = store.iter().map(|s| s.record.ts).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
        assert_eq!(store.horizon(), 2.0);
    }

    #[test]
    fn evict_before_zero_is_noop() {
        let c = cfg();
        let mut store = TrafficStore::new();
        let p = pkt(1.0, "5.5.5.5", "192.168.1.2");
        let d = direction_of(&p, &c).unwrap();
        store.append(p, d, remote_host_of(&p, d)).unwrap();
        store.evict_before(0.0);
        assert_eq!(store.len(), 1);
        assert_eq!(store.horizon(), 0.0);
    }

    #[test]
    fn out_of_order_append_is_rejected_and_counted() {
        let c = cfg();
        let mut store = TrafficStore::new();
        let p = pkt(5.0, "5.5.5.5", "192.168.1.2");
        let d = direction_of(&p, &c).unwrap();
        let h = remote_host_of(&p, d);
        store.append(p, d, h).unwrap();
        let mut earlier = p;
        earlier.ts = 4.0;
        assert!(store.append(earlier, d, h).is_err());
        assert_eq!(store.rejected_out_of_order, 1);
        // Equal timestamps are fine.
        let mut same = p;
        same.ts = 5.0;
        store.append(same, d, h).unwrap();
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn range_is_half_open() {
        let c = cfg();
        let mut store = TrafficStore::new();
        for ts in [1.0, 2.0, 2.0, 3.0, 4.0] {
            let p = pkt(ts, "5.5.5.5", "192.168.1.2");
            let d = direction_of(&p, &c).unwrap();
            store.append(p, d, remote_host_of(&p, d)).unwrap();
        }
        let got: Vec<f64> = store
            .range(TimeWindow::new(2.0, 4.0))
            .map(|s| s.record.ts)
            .collect();
        assert_eq!(got, vec![2.0, 2.0, 3.0]);
    }

    proptest! {
        /// Interleaved appends and evictions match a brute-force filter of
        /// everything appended by `ts >= horizon`.
        #[test]
        fn store_matches_brute_force(ops in proptest::collection::vec((0u8..2, 0u32..100), 1..200)) {
            let c = cfg();
            let mut store = TrafficStore::new();
            let mut appended: Vec<f64> = Vec::new();
            let mut last = 0.0f64;
            let mut horizon = 0.0f64;
            for (kind, v) in ops {
                let t = v as f64 / 7.0;
                if kind == 0 {
                    let ts = last + t;
                    last = ts;
                    let p = pkt(ts, "5.5.5.5", "192.168.1.2");
                    let d = direction_of(&p, &c).unwrap();
                    if ts >= horizon {
                        store.append(p, d, remote_host_of(&p, d)).unwrap();
                        appended.push(ts);
                    } else {
                        prop_assert!(store.append(p, d, remote_host_of(&p, d)).is_err());
                    }
                } else {
                    let t = horizon.max(t);
                    horizon = t;
                    store.evict_before(t);
                }
            }
            let expect: Vec<f64> = appended.iter().copied().filter(|&ts| ts >= horizon).collect();
            let got: Vec<f64> = store.iter().map(|s| s.record.ts).collect();
            prop_assert_eq!(got, expect);
            prop_assert!(store.horizon() >= horizon - 1e-12);
        }

        /// Labeling is order-independent: permuting records never changes the map.
        #[test]
        fn labeling_is_order_independent(seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let c = cfg();
            let mut records = [pkt(1.0, "5.5.5.5", "192.168.1.2"),
                pkt(2.0, "6.6.6.6", "192.168.1.20"),
                pkt(3.0, "7.7.7.7", "192.168.1.20"),
                pkt(4.0, "7.7.7.7", "192.168.1.2"),
                pkt(5.0, "8.8.8.8", "192.168.1.99"),
                pkt(6.0, "192.168.1.20", "6.6.6.6")];
            let base = label_hosts(records.iter(), &c);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            records.shuffle(&mut rng);
            let shuffled = label_hosts(records.iter(), &c);
            prop_assert_eq!(base, shuffled);
        }
    }
}
