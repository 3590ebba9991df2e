//! Classic pcap reading and writing (Ethernet link layer only).
//!
//! Both byte orders and both timestamp precisions (microsecond and
//! nanosecond, distinguished by magic) are accepted on read. Non-IPv4
//! frames and frames whose captured bytes stop short of the headers are
//! skipped and counted, never fatal; only a bad global header aborts.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use super::{IngestCounters, IngestError};
use crate::types::{PacketRecord, PROTO_TCP, PROTO_UDP};

const MAGIC_MICRO: u32 = 0xA1B2_C3D4;
const MAGIC_MICRO_SWAPPED: u32 = 0xD4C3_B2A1;
const MAGIC_NANO: u32 = 0xA1B2_3C4D;
const MAGIC_NANO_SWAPPED: u32 = 0x4D3C_B2A1;

const LINKTYPE_ETHERNET: u32 = 1;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;

/// Upper bound on a sane captured length; anything larger means the stream
/// has desynchronized and reading stops.
const MAX_CAPTURED: u32 = 64 * 1024 * 1024;

/// Timestamp resolution of a pcap file, encoded in its magic number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TsPrecision {
    Micro,
    Nano,
}

impl TsPrecision {
    fn ticks_per_second(self) -> f64 {
        match self {
            TsPrecision::Micro => 1e6,
            TsPrecision::Nano => 1e9,
        }
    }
}

/// Composes a packet timestamp from its two header fields. The writer uses
/// the exact inverse, so a write/read round trip preserves `f64` values
/// that were themselves composed this way.
pub(crate) fn compose_ts(sec: u32, frac: u32, precision: TsPrecision) -> f64 {
    sec as f64 + frac as f64 / precision.ticks_per_second()
}

fn split_ts(ts: f64, precision: TsPrecision) -> (u32, u32) {
    let sec = ts.trunc();
    let mut frac = ((ts - sec) * precision.ticks_per_second()).round();
    let mut sec = sec as u32;
    if frac >= precision.ticks_per_second() {
        sec += 1;
        frac = 0.0;
    }
    (sec, frac as u32)
}

/// Streaming reader over the IPv4 packets of a classic pcap file.
pub struct PcapReader<R: Read> {
    src: R,
    big_endian: bool,
    precision: TsPrecision,
    counters: IngestCounters,
    finished: bool,
}

impl PcapReader<BufReader<File>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self, IngestError> {
        PcapReader::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> PcapReader<R> {
    /// Reads and validates the 24-byte global header.
    pub fn new(mut src: R) -> Result<Self, IngestError> {
        let mut header = [0u8; 24];
        src.read_exact(&mut header).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                IngestError::TruncatedHeader
            } else {
                IngestError::Io(e)
            }
        })?;
        let raw_magic = u32::from_le_bytes(header[0..4].try_into().unwrap());
        let (big_endian, precision) = match raw_magic {
            MAGIC_MICRO => (false, TsPrecision::Micro),
            MAGIC_MICRO_SWAPPED => (true, TsPrecision::Micro),
            MAGIC_NANO => (false, TsPrecision::Nano),
            MAGIC_NANO_SWAPPED => (true, TsPrecision::Nano),
            other => return Err(IngestError::BadMagic(other)),
        };
        let rd_u32 = |b: &[u8]| -> u32 {
            let arr: [u8; 4] = b.try_into().unwrap();
            if big_endian {
                u32::from_be_bytes(arr)
            } else {
                u32::from_le_bytes(arr)
            }
        };
        let network = rd_u32(&header[20..24]);
        if network != LINKTYPE_ETHERNET {
            return Err(IngestError::UnsupportedLinkType(network));
        }
        Ok(PcapReader {
            src,
            big_endian,
            precision,
            counters: IngestCounters::default(),
            finished: false,
        })
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters
    }

    fn read_u32(&self, b: &[u8]) -> u32 {
        let arr: [u8; 4] = b.try_into().unwrap();
        if self.big_endian {
            u32::from_be_bytes(arr)
        } else {
            u32::from_le_bytes(arr)
        }
    }

    /// Reads exactly `buf.len()` bytes; `Ok(false)` means clean EOF at the
    /// first byte, `Err` carries real I/O failures, and a partial read is
    /// reported as `Ok(false)` after counting a truncation.
    fn fill(&mut self, buf: &mut [u8]) -> Result<bool, IngestError> {
        let mut off = 0;
        while off < buf.len() {
            match self.src.read(&mut buf[off..]) {
                Ok(0) => {
                    if off > 0 {
                        self.counters.truncated += 1;
                    }
                    return Ok(false);
                }
                Ok(n) => off += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(IngestError::Io(e)),
            }
        }
        Ok(true)
    }
}

enum FrameOutcome {
    Record(PacketRecord),
    NonIpv4,
    Ipv6,
    Truncated,
    Invalid,
}

fn parse_frame(ts: f64, frame: &[u8]) -> FrameOutcome {
    if frame.len() < 14 {
        return FrameOutcome::Truncated;
    }
    let ethertype = u16::from_be_bytes([frame[12], frame[13]]);
    if ethertype == ETHERTYPE_IPV6 {
        return FrameOutcome::Ipv6;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return FrameOutcome::NonIpv4;
    }
    let ip = &frame[14..];
    if ip.len() < 20 {
        return FrameOutcome::Truncated;
    }
    if ip[0] >> 4 != 4 {
        return FrameOutcome::Invalid;
    }
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    if ihl < 20 {
        return FrameOutcome::Invalid;
    }
    let length = u32::from(u16::from_be_bytes([ip[2], ip[3]]));
    let ttl = ip[8];
    let proto = ip[9];
    let src_addr = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst_addr = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
    let (src_port, dst_port) = if proto == PROTO_TCP || proto == PROTO_UDP {
        if ip.len() < ihl + 4 {
            return FrameOutcome::Truncated;
        }
        (
            u16::from_be_bytes([ip[ihl], ip[ihl + 1]]),
            u16::from_be_bytes([ip[ihl + 2], ip[ihl + 3]]),
        )
    } else {
        (0, 0)
    };
    let record = PacketRecord {
        ts,
        src_addr,
        dst_addr,
        src_port,
        dst_port,
        proto,
        length,
        ttl,
    };
    match record.validate() {
        Ok(()) => FrameOutcome::Record(record),
        Err(_) => FrameOutcome::Invalid,
    }
}

impl<R: Read> Iterator for PcapReader<R> {
    type Item = Result<PacketRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        loop {
            let mut rec_header = [0u8; 16];
            match self.fill(&mut rec_header) {
                Ok(true) => {}
                Ok(false) => {
                    self.finished = true;
                    return None;
                }
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
            let ts_sec = self.read_u32(&rec_header[0..4]);
            let ts_frac = self.read_u32(&rec_header[4..8]);
            let incl_len = self.read_u32(&rec_header[8..12]);
            if incl_len > MAX_CAPTURED {
                self.counters.truncated += 1;
                self.finished = true;
                return None;
            }
            let mut frame = vec![0u8; incl_len as usize];
            match self.fill(&mut frame) {
                Ok(true) => {}
                Ok(false) => {
                    self.finished = true;
                    return None;
                }
                Err(e) => {
                    self.finished = true;
                    return Some(Err(e));
                }
            }
            let ts = compose_ts(ts_sec, ts_frac, self.precision);
            match parse_frame(ts, &frame) {
                FrameOutcome::Record(r) => {
                    self.counters.packets += 1;
                    return Some(Ok(r));
                }
                FrameOutcome::NonIpv4 => self.counters.non_ipv4 += 1,
                FrameOutcome::Ipv6 => self.counters.ipv6 += 1,
                FrameOutcome::Truncated => self.counters.truncated += 1,
                FrameOutcome::Invalid => self.counters.invalid += 1,
            }
        }
    }
}

/// Reads a whole pcap file into memory.
pub fn read_pcap<P: AsRef<Path>>(
    path: P,
) -> Result<(Vec<PacketRecord>, IngestCounters), IngestError> {
    let mut reader = PcapReader::open(path)?;
    let mut records = Vec::new();
    for item in reader.by_ref() {
        records.push(item?);
    }
    Ok((records, reader.counters()))
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let mut sum = 0u32;
    for chunk in header.chunks(2) {
        let word = u16::from_be_bytes([chunk[0], *chunk.get(1).unwrap_or(&0)]);
        sum += u32::from(word);
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    !(sum as u16)
}

/// Writes records as a classic little-endian microsecond pcap file.
pub fn write_pcap<W: Write>(w: W, records: &[PacketRecord]) -> io::Result<()> {
    write_pcap_with(w, records, false, TsPrecision::Micro)
}

/// Writes records as classic pcap with an explicit byte order and
/// timestamp precision. Each record is synthesized as an Ethernet frame
/// with a minimal TCP/UDP header so ports survive the round trip; the IP
/// total length carries `record.length` even when the payload itself is
/// not materialized.
pub fn write_pcap_with<W: Write>(
    mut w: W,
    records: &[PacketRecord],
    big_endian: bool,
    precision: TsPrecision,
) -> io::Result<()> {
    let wr_u32 = |v: u32| -> [u8; 4] {
        if big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        }
    };
    let wr_u16 = |v: u16| -> [u8; 2] {
        if big_endian {
            v.to_be_bytes()
        } else {
            v.to_le_bytes()
        }
    };
    let magic = match precision {
        TsPrecision::Micro => MAGIC_MICRO,
        TsPrecision::Nano => MAGIC_NANO,
    };
    w.write_all(&wr_u32(magic))?;
    w.write_all(&wr_u16(2))?; // version 2.4
    w.write_all(&wr_u16(4))?;
    w.write_all(&wr_u32(0))?; // thiszone
    w.write_all(&wr_u32(0))?; // sigfigs
    w.write_all(&wr_u32(65535))?; // snaplen
    w.write_all(&wr_u32(LINKTYPE_ETHERNET))?;

    for r in records {
        if r.length > 65535 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!(
                    "IP total length {} does not fit the 16-bit header field",
                    r.length
                ),
            ));
        }
        let mut frame = Vec::with_capacity(54);
        // Ethernet
        frame.extend_from_slice(&[0, 0, 0, 0, 0, 1]);
        frame.extend_from_slice(&[0, 0, 0, 0, 0, 2]);
        frame.extend_from_slice(&ETHERTYPE_IPV4.to_be_bytes());
        // IPv4 header
        let mut ip = [0u8; 20];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&(r.length as u16).to_be_bytes());
        ip[6] = 0x40; // don't-fragment
        ip[8] = r.ttl;
        ip[9] = r.proto;
        ip[12..16].copy_from_slice(&r.src_addr.octets());
        ip[16..20].copy_from_slice(&r.dst_addr.octets());
        let csum = ipv4_checksum(&ip);
        ip[10..12].copy_from_slice(&csum.to_be_bytes());
        frame.extend_from_slice(&ip);
        // Minimal transport header for ported protocols
        match r.proto {
            PROTO_TCP => {
                let mut tcp = [0u8; 20];
                tcp[0..2].copy_from_slice(&r.src_port.to_be_bytes());
                tcp[2..4].copy_from_slice(&r.dst_port.to_be_bytes());
                tcp[12] = 0x50; // data offset 5
                tcp[13] = 0x18; // PSH|ACK
                tcp[14..16].copy_from_slice(&0xFFFFu16.to_be_bytes());
                frame.extend_from_slice(&tcp);
            }
            PROTO_UDP => {
                let mut udp = [0u8; 8];
                udp[0..2].copy_from_slice(&r.src_port.to_be_bytes());
                udp[2..4].copy_from_slice(&r.dst_port.to_be_bytes());
                let udp_len = (r.length.saturating_sub(20) as u16).max(8);
                udp[4..6].copy_from_slice(&udp_len.to_be_bytes());
                frame.extend_from_slice(&udp);
            }
            _ => {}
        }
        // Never claim to have captured more bytes than the packet had.
        let captured = frame.len().min(14 + r.length as usize);
        frame.truncate(captured);
        let orig_len = 14 + r.length;

        let (sec, frac) = split_ts(r.ts, precision);
        w.write_all(&wr_u32(sec))?;
        w.write_all(&wr_u32(frac))?;
        w.write_all(&wr_u32(captured as u32))?;
        w.write_all(&wr_u32(orig_len))?;
        w.write_all(&frame)?;
    }
    Ok(())
}
