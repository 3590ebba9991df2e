//! NDJSON packet format: one JSON object per line with keys
//! `ts, src_ip, dst_ip, src_port, dst_port, proto, len, ttl`.
//! Unknown keys are ignored; lines that fail to parse or validate are
//! skipped and counted.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Lines, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IngestCounters, IngestError};
use crate::types::PacketRecord;

#[derive(Serialize, Deserialize)]
struct WirePacket {
    ts: f64,
    src_ip: Ipv4Addr,
    dst_ip: Ipv4Addr,
    src_port: u16,
    dst_port: u16,
    proto: u8,
    len: u32,
    ttl: u8,
}

impl From<&PacketRecord> for WirePacket {
    fn from(r: &PacketRecord) -> Self {
        WirePacket {
            ts: r.ts,
            src_ip: r.src_addr,
            dst_ip: r.dst_addr,
            src_port: r.src_port,
            dst_port: r.dst_port,
            proto: r.proto,
            len: r.length,
            ttl: r.ttl,
        }
    }
}

impl From<WirePacket> for PacketRecord {
    fn from(w: WirePacket) -> Self {
        PacketRecord {
            ts: w.ts,
            src_addr: w.src_ip,
            dst_addr: w.dst_ip,
            src_port: w.src_port,
            dst_port: w.dst_port,
            proto: w.proto,
            length: w.len,
            ttl: w.ttl,
        }
    }
}

/// Streaming NDJSON packet reader. Malformed lines are skipped and counted
/// with their line numbers (the first few are kept for diagnostics).
pub struct NdjsonReader<R: BufRead> {
    lines: Lines<R>,
    line_no: u64,
    counters: IngestCounters,
    /// Line number and description of the first few rejected lines.
    rejected: Vec<(u64, String)>,
}

const KEPT_REJECTIONS: usize = 8;

impl NdjsonReader<BufReader<File>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self, IngestError> {
        Ok(NdjsonReader::new(BufReader::new(File::open(path)?)))
    }
}

impl<R: BufRead> NdjsonReader<R> {
    pub fn new(src: R) -> Self {
        NdjsonReader {
            lines: src.lines(),
            line_no: 0,
            counters: IngestCounters::default(),
            rejected: Vec::new(),
        }
    }

    pub fn counters(&self) -> IngestCounters {
        self.counters
    }

    /// Line numbers and reasons for the first few rejected lines.
    pub fn rejections(&self) -> &[(u64, String)] {
        &self.rejected
    }

    fn reject(&mut self, reason: String) {
        self.counters.malformed_lines += 1;
        if self.rejected.len() < KEPT_REJECTIONS {
            self.rejected.push((self.line_no, reason));
        }
    }
}

impl<R: BufRead> Iterator for NdjsonReader<R> {
    type Item = Result<PacketRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(IngestError::Io(e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<WirePacket>(&line) {
                Ok(wire) => {
                    let record = PacketRecord::from(wire);
                    match record.validate() {
                        Ok(()) => {
                            self.counters.packets += 1;
                            return Some(Ok(record));
                        }
                        Err(e) => self.reject(e.to_string()),
                    }
                }
                Err(e) => self.reject(e.to_string()),
            }
        }
    }
}

/// Reads a whole NDJSON packet file into memory.
pub fn read_ndjson<P: AsRef<Path>>(
    path: P,
) -> Result<(Vec<PacketRecord>, IngestCounters), IngestError> {
    let mut reader = NdjsonReader::open(path)?;
    let mut records = Vec::new();
    for item in reader.by_ref() {
        records.push(item?);
    }
    Ok((records, reader.counters()))
}

/// Writes records as NDJSON, one object per line, in input order.
pub fn write_ndjson<W: Write>(mut w: W, records: &[PacketRecord]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, &WirePacket::from(r))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
