use std::hash::Hasher;
use std::io::{self, BufRead, Write};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::Envelope;

/// An inbound message together with the client that sent it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedMessage {
    pub client: String,
    pub msg: Envelope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub applied: Vec<AppliedMessage>,
    /// Messages lost by the latency model since the previous record.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<AppliedMessage>,
    /// Snapshot hash after the tick, 16 hex digits.
    pub hash: String,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Append-only record of every executed tick.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SessionLog {
    records: Vec<LogRecord>,
}

impl SessionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, record: LogRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn hashes(&self) -> Vec<String> {
        self.records.iter().map(|r| r.hash.clone()).collect()
    }

    pub fn write_ndjson<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_ndjson<R: BufRead>(input: R) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(Self { records })
    }

    pub fn from_ndjson(text: &str) -> Result<Self, LogError> {
        Self::read_ndjson(text.as_bytes())
    }
}

impl From<Vec<LogRecord>> for SessionLog {
    fn from(records: Vec<LogRecord>) -> Self {
        Self { records }
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

pub fn hash_hex(hash: u64) -> String {
    format!("{hash:016x}")
}
