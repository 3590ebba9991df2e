//! Domain types shared by every stage of the pipeline.
//!
//! Everything here is a plain immutable value type: packet observations,
//! direction and label enums, the network configuration that tells local
//! addresses apart from remote ones, and half-open time windows. No I/O.

use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// IP protocol number for TCP.
pub const PROTO_TCP: u8 = 6;
/// IP protocol number for UDP.
pub const PROTO_UDP: u8 = 17;

/// One normalized IPv4 packet observation.
///
/// `length` is the IP total length from the header, not the captured byte
/// count. Ports are zero for protocols that have none.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PacketRecord {
    /// Seconds since the epoch, fractional.
    pub ts: f64,
    pub src_addr: Ipv4Addr,
    pub dst_addr: Ipv4Addr,
    pub src_port: u16,
    pub dst_port: u16,
    /// IP protocol number (6 = TCP, 17 = UDP, ...).
    pub proto: u8,
    /// IP total length in bytes.
    pub length: u32,
    pub ttl: u8,
}

/// Why a [`PacketRecord`] failed validation.
#[derive(Debug, Error, PartialEq)]
pub enum PacketInvalid {
    #[error("timestamp must be finite and non-negative, got {0}")]
    BadTimestamp(f64),
    #[error("length {0} is below the 20-byte IPv4 minimum")]
    ShortLength(u32),
    #[error("ports must be zero for portless protocol {proto}")]
    PortsOnPortlessProto { proto: u8 },
}

impl PacketRecord {
    /// Checks the record invariants: finite non-negative timestamp, length
    /// of at least one IPv4 header, and zero ports unless TCP or UDP.
    pub fn validate(&self) -> Result<(), PacketInvalid> {
        if !self.ts.is_finite() || self.ts < 0.0 {
            return Err(PacketInvalid::BadTimestamp(self.ts));
        }
        if self.length < 20 {
            return Err(PacketInvalid::ShortLength(self.length));
        }
        let has_ports = self.proto == PROTO_TCP || self.proto == PROTO_UDP;
        if !has_ports && (self.src_port != 0 || self.dst_port != 0) {
            return Err(PacketInvalid::PortsOnPortlessProto { proto: self.proto });
        }
        Ok(())
    }
}

/// Which way a packet crossed the gateway.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    /// Remote host to a local address.
    Incoming,
    /// Local address to a remote host.
    Outgoing,
}

/// The remote (internet-side) endpoint a conversation is grouped under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HostKey(pub Ipv4Addr);

impl fmt::Display for HostKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Binary ground-truth / verdict class. Malicious is the positive class
/// for every metric in this crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Benign,
    Malicious,
}

impl Label {
    pub fn is_malicious(self) -> bool {
        matches!(self, Label::Malicious)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Benign => f.write_str("benign"),
            Label::Malicious => f.write_str("malicious"),
        }
    }
}

/// An IPv4 network in CIDR notation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Cidr {
    addr: Ipv4Addr,
    prefix_len: u8,
}

#[derive(Debug, Error, PartialEq)]
pub enum CidrParseError {
    #[error("expected `a.b.c.d/len`, got {0:?}")]
    Syntax(String),
    #[error("prefix length {0} exceeds 32")]
    PrefixTooLong(u8),
}

impl Cidr {
    pub fn new(addr: Ipv4Addr, prefix_len: u8) -> Result<Self, CidrParseError> {
        if prefix_len > 32 {
            return Err(CidrParseError::PrefixTooLong(prefix_len));
        }
        Ok(Cidr { addr, prefix_len })
    }

    fn mask(self) -> u32 {
        if self.prefix_len == 0 {
            0
        } else {
            u32::MAX << (32 - self.prefix_len)
        }
    }

    pub fn contains(self, ip: Ipv4Addr) -> bool {
        let m = self.mask();
        u32::from(ip) & m == u32::from(self.addr) & m
    }
}

impl FromStr for Cidr {
    type Err = CidrParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| CidrParseError::Syntax(s.to_string()))?;
        let addr = addr
            .parse::<Ipv4Addr>()
            .map_err(|_| CidrParseError::Syntax(s.to_string()))?;
        let len = len
            .parse::<u8>()
            .map_err(|_| CidrParseError::Syntax(s.to_string()))?;
        Cidr::new(addr, len)
    }
}

impl fmt::Display for Cidr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.addr, self.prefix_len)
    }
}

impl TryFrom<String> for Cidr {
    type Error = CidrParseError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Cidr> for String {
    fn from(c: Cidr) -> String {
        c.to_string()
    }
}

/// Which local addresses exist and which of them are honeypot vs. device.
///
/// Remote hosts that contact a honeypot address get labeled malicious;
/// hosts that only talk to device addresses get labeled benign.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub local_nets: Vec<Cidr>,
    pub honeypot_addrs: BTreeSet<Ipv4Addr>,
    pub device_addrs: BTreeSet<Ipv4Addr>,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetConfigError {
    #[error("address {0} is both a honeypot and a device")]
    Overlap(Ipv4Addr),
    #[error("address {0} is not inside any local network")]
    NotLocal(Ipv4Addr),
    #[error("at least one local network is required")]
    NoLocalNets,
}

impl NetConfig {
    pub fn new(
        local_nets: Vec<Cidr>,
        honeypot_addrs: BTreeSet<Ipv4Addr>,
        device_addrs: BTreeSet<Ipv4Addr>,
    ) -> Result<Self, NetConfigError> {
        if local_nets.is_empty() {
            return Err(NetConfigError::NoLocalNets);
        }
        if let Some(&a) = honeypot_addrs.intersection(&device_addrs).next() {
            return Err(NetConfigError::Overlap(a));
        }
        let cfg = NetConfig {
            local_nets,
            honeypot_addrs,
            device_addrs,
        };
        for &a in cfg.honeypot_addrs.iter().chain(cfg.device_addrs.iter()) {
            if !cfg.is_local(a) {
                return Err(NetConfigError::NotLocal(a));
            }
        }
        Ok(cfg)
    }

    pub fn is_local(&self, ip: Ipv4Addr) -> bool {
        self.local_nets.iter().any(|n| n.contains(ip))
    }

    pub fn is_honeypot(&self, ip: Ipv4Addr) -> bool {
        self.honeypot_addrs.contains(&ip)
    }

    pub fn is_device(&self, ip: Ipv4Addr) -> bool {
        self.device_addrs.contains(&ip)
    }
}

/// Half-open interval `[start, end)` in seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub start: f64,
    pub end: f64,
}

impl TimeWindow {
    /// Panics if `end <= start`; windows always have positive duration.
    pub fn new(start: f64, end: f64) -> Self {
        assert!(end > start, "window end {end} must exceed start {start}");
        TimeWindow { start, end }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, ts: f64) -> bool {
        ts >= self.start && ts < self.end
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Classifies a packet as incoming (remote to local) or outgoing (local to
/// remote). Returns `None` when both or neither endpoint is local; such
/// packets carry no per-host signal and are dropped from analysis.
pub fn direction_of(p: &PacketRecord, cfg: &NetConfig) -> Option<Direction> {
    let src_local = cfg.is_local(p.src_addr);
    let dst_local = cfg.is_local(p.dst_addr);
    match (src_local, dst_local) {
        (false, true) => Some(Direction::Incoming),
        (true, false) => Some(Direction::Outgoing),
        _ => None,
    }
}

/// The remote endpoint of a directed packet.
pub fn remote_host_of(p: &PacketRecord, dir: Direction) -> HostKey {
    match dir {
        Direction::Incoming => HostKey(p.src_addr),
        Direction::Outgoing => HostKey(p.dst_addr),
    }
}

/// The local endpoint of a directed packet.
pub fn local_addr_of(p: &PacketRecord, dir: Direction) -> Ipv4Addr {
    match dir {
        Direction::Incoming => p.dst_addr,
        Direction::Outgoing => p.src_addr,
    }
}
