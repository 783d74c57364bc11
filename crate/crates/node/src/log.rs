//! Append-only event log. One record per line:
//!
//! ```text
//! <byte length of json> <first 16 hex digits of sha256(json)> <json>\n
//! ```
//!
//! Replay verifies length, checksum and sequence of every line; a torn or
//! edited record is reported as [`NodeError::ChecksumMismatch`].

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::NodeError;
use crate::node::NodeRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub kind: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub seq: u64,
    pub entity: EntityRef,
    pub payload: NodeRecord,
}

pub fn checksum(json: &str) -> String {
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

pub fn encode_line(record: &LogRecord) -> String {
    let json = serde_json::to_string(record).expect("log records serialize");
    format!("{} {} {}\n", json.len(), checksum(&json), json)
}

/// Parses a whole log. Sequence numbers must start at 1 and increase by
/// one; an empty input is an empty log.
pub fn parse_log(bytes: &[u8]) -> Result<Vec<LogRecord>, NodeError> {
    let mut records = Vec::new();
    let mut rest = bytes;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let mismatch = NodeError::ChecksumMismatch { line: line_no };
        let end = rest.iter().position(|&b| b == b'\n').ok_or(mismatch.clone())?;
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| mismatch.clone())?;
        rest = &rest[end + 1..];

        let mut parts = line.splitn(3, ' ');
        let (Some(len), Some(sum), Some(json)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(mismatch);
        };
        if len.parse::<usize>().ok() != Some(json.len()) || sum != checksum(json) {
            return Err(mismatch);
        }
        let record: LogRecord = serde_json::from_str(json)
            .map_err(|e| NodeError::CorruptLog(format!("line {line_no}: {e}")))?;
        let expected = records.len() as u64 + 1;
        if record.seq != expected {
            return Err(NodeError::CorruptLog(format!("line {line_no}: sequence {} where {expected} was due", record.seq)));
        }
        records.push(record);
    }
    Ok(records)
}

/// The single appender. In-memory logs keep their bytes; file-backed logs
/// write and flush every record before returning.
#[derive(Debug)]
pub struct EventLog {
    file: Option<File>,
    path: Option<PathBuf>,
    buffer: Vec<u8>,
    next_seq: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        EventLog { file: None, path: None, buffer: Vec::new(), next_seq: 1 }
    }

    /// Opens (or creates) a log file and returns its records.
    pub fn open(path: &Path) -> Result<(Self, Vec<LogRecord>), NodeError> {
        let bytes = match std::fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let records = parse_log(&bytes)?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let log = EventLog {
            file: Some(file),
            path: Some(path.to_path_buf()),
            buffer: Vec::new(),
            next_seq: records.len() as u64 + 1,
        };
        Ok((log, records))
    }

    /// An in-memory log that continues after already-replayed records.
    pub fn resume_in_memory(bytes: Vec<u8>, records: usize) -> Self {
        let mut log = EventLog::in_memory();
        log.next_seq = records as u64 + 1;
        log.buffer = bytes;
        log
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Records written so far, including replayed ones.
    pub fn len(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&mut self, entity: EntityRef, payload: NodeRecord) -> Result<u64, NodeError> {
        let record = LogRecord { seq: self.next_seq, entity, payload };
        let line = encode_line(&record);
        match &mut self.file {
            Some(f) => {
                f.write_all(line.as_bytes())?;
                f.flush()?;
            }
            None => {
                self.buffer.extend_from_slice(line.as_bytes());
            }
        }
        self.next_seq += 1;
        Ok(record.seq)
    }

    /// Bytes of an in-memory log; empty for file-backed logs.
    pub fn bytes(&self) -> &[u8] {
        &self.buffer
    }
}

/// The first `records` lines of a log.
pub fn prefix(bytes: &[u8], records: usize) -> &[u8] {
    let end = bytes
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == b'\n')
        .nth(records.wrapping_sub(1))
        .map_or(0, |(i, _)| i + 1);
    if records == 0 {
        &bytes[..0]
    } else {
        &bytes[..end]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use interlend_core::clock::reference_epoch;

    fn rec(seq: u64) -> LogRecord {
        LogRecord {
            seq,
            entity: EntityRef { kind: "package".into(), id: "P".into() },
            payload: NodeRecord::PackagesPurged { at: reference_epoch() },
        }
    }

    #[test]
    fn round_trip_and_truncation() {
        let text = format!("{}{}", encode_line(&rec(1)), encode_line(&rec(2)));
        assert_eq!(parse_log(text.as_bytes()).unwrap().len(), 2);
        assert_eq!(parse_log(b"").unwrap(), vec![]);
        let cut = &text.as_bytes()[..text.len() - 5];
        assert_eq!(parse_log(cut), Err(NodeError::ChecksumMismatch { line: 2 }));
        let edited = text.replacen("package", "packagf", 1);
        assert_eq!(parse_log(edited.as_bytes()), Err(NodeError::ChecksumMismatch { line: 1 }));
    }

    #[test]
    fn sequence_gaps_are_rejected() {
        let text = format!("{}{}", encode_line(&rec(1)), encode_line(&rec(3)));
        assert!(matches!(parse_log(text.as_bytes()), Err(NodeError::CorruptLog(_))));
    }
}
