//! Append-only, hash-chained decision log.
//!
//! One canonical JSON record per line. Each record embeds the hash of its
//! predecessor, so any edit, reorder or deletion inside the file breaks the
//! chain from that point on.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use polity_core::canonical::to_canonical_string;
use polity_core::clock::timestamp;
use polity_core::{EntityId, Entity, Failure};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// `prevHash` of the first record.
pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    LocalDecide,
    RemoteVerify,
    /// The request could not be parsed.
    Unparsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum SlotVerdict {
    Yes,
    No,
    Accepted,
    Rejected,
    /// Evaluation could not run (unknown entity, wrong kind, budget).
    Error,
    /// A RemoteVerify request without an envelope for the slot.
    Missing,
    /// An earlier slot already failed.
    NotEvaluated,
}

impl SlotVerdict {
    pub fn passed(self) -> bool {
        matches!(self, SlotVerdict::Yes | SlotVerdict::Accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SlotRecord {
    pub slot: String,
    pub policy: String,
    pub args: Vec<EntityId>,
    pub verdict: SlotVerdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    /// Hash of the proof or refutation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum Outcome {
    Allowed { item: Entity },
    Denied { slot: String, reason: String },
    UpstreamError { message: String },
}

impl Outcome {
    pub fn is_allowed(&self) -> bool {
        matches!(self, Outcome::Allowed { .. })
    }
}

/// Everything in a record except its chain position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RecordDraft {
    pub request_id: String,
    pub mode: Mode,
    pub request: serde_json::Value,
    pub slots: Vec<SlotRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<SlotRecord>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct Body {
    seq: u64,
    #[serde(with = "timestamp")]
    timestamp: DateTime<Utc>,
    prev_hash: String,
    #[serde(flatten)]
    draft: RecordDraft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DecisionRecord {
    pub seq: u64,
    #[serde(with = "timestamp")]
    pub timestamp: DateTime<Utc>,
    pub prev_hash: String,
    #[serde(flatten)]
    pub draft: RecordDraft,
    /// Hex SHA-256 of the canonical record without this field.
    pub hash: String,
}

impl DecisionRecord {
    fn seal(seq: u64, timestamp: DateTime<Utc>, prev_hash: String, draft: RecordDraft) -> Self {
        let body = Body { seq, timestamp, prev_hash, draft };
        let hash = hex::encode(Sha256::digest(to_canonical_string(&body)));
        let Body { seq, timestamp, prev_hash, draft } = body;
        Self { seq, timestamp, prev_hash, draft, hash }
    }

    pub fn computed_hash(&self) -> String {
        Self::seal(self.seq, self.timestamp, self.prev_hash.clone(), self.draft.clone()).hash
    }

    pub fn request_id(&self) -> &str {
        &self.draft.request_id
    }

    pub fn outcome(&self) -> &Outcome {
        &self.draft.outcome
    }

    /// Whether every slot passed, i.e. the upstream was reachable.
    pub fn all_slots_passed(&self) -> bool {
        !self.draft.slots.is_empty() && self.draft.slots.iter().all(|s| s.verdict.passed())
    }

    pub fn to_line(&self) -> String {
        to_canonical_string(self)
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("decision log i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error("request id {0} already logged")]
    DuplicateRequestId(String),
}

struct Inner {
    file: Option<File>,
    last_hash: String,
    records: Vec<DecisionRecord>,
    index: HashMap<String, usize>,
}

/// The single serialization point of a gateway: appends are atomic and
/// totally ordered.
pub struct DecisionLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl DecisionLog {
    pub fn in_memory() -> Self {
        Self::with(None, None, Vec::new())
    }

    /// Opens (or creates) a log file, replaying and checking the existing
    /// chain before accepting appends.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LogError> {
        let path = path.as_ref().to_path_buf();
        let records = if path.exists() { read_chain(BufReader::new(File::open(&path)?))? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self::with(Some(path), Some(file), records))
    }

    fn with(path: Option<PathBuf>, file: Option<File>, records: Vec<DecisionRecord>) -> Self {
        let last_hash = records.last().map_or_else(|| GENESIS.to_owned(), |r| r.hash.clone());
        let index = records.iter().enumerate().map(|(i, r)| (r.request_id().to_owned(), i)).collect();
        Self { path, inner: Mutex::new(Inner { file, last_hash, records, index }) }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn append(&self, draft: RecordDraft, at: DateTime<Utc>) -> Result<DecisionRecord, LogError> {
        let mut inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if inner.index.contains_key(&draft.request_id) {
            return Err(LogError::DuplicateRequestId(draft.request_id));
        }
        let record = DecisionRecord::seal(inner.records.len() as u64, at, inner.last_hash.clone(), draft);
        if let Some(file) = inner.file.as_mut() {
            let mut line = record.to_line();
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.last_hash = record.hash.clone();
        let i = inner.records.len();
        inner.index.insert(record.request_id().to_owned(), i);
        inner.records.push(record.clone());
        Ok(record)
    }

    pub fn get(&self, request_id: &str) -> Option<DecisionRecord> {
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        inner.index.get(request_id).map(|&i| inner.records[i].clone())
    }

    pub fn records(&self) -> Vec<DecisionRecord> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Forces appended records to stable storage.
    pub fn sync(&self) -> Result<(), LogError> {
        let inner = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(file) = inner.file.as_ref() {
            file.sync_all()?;
        }
        Ok(())
    }
}

/// Parses a log and checks sequence numbers, hashes, links and id
/// uniqueness.
pub fn read_chain(reader: impl BufRead) -> Result<Vec<DecisionRecord>, LogError> {
    let mut out: Vec<DecisionRecord> = Vec::new();
    let mut ids = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let corrupt = |reason: String| LogError::Corrupt { line: i + 1, reason };
        let rec: DecisionRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        let prev = out.last().map_or(GENESIS, |r| r.hash.as_str());
        if rec.seq != out.len() as u64 {
            return Err(corrupt(format!("sequence number {} out of place", rec.seq)));
        }
        if rec.prev_hash != prev {
            return Err(corrupt("broken link to the previous record".into()));
        }
        if rec.computed_hash() != rec.hash {
            return Err(corrupt("record hash does not match its contents".into()));
        }
        if ids.insert(rec.request_id().to_owned(), i).is_some() {
            return Err(corrupt(format!("duplicate request id {}", rec.request_id())));
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn draft(id: &str) -> RecordDraft {
        RecordDraft {
            request_id: id.into(),
            mode: Mode::LocalDecide,
            request: serde_json::json!({"x": id}),
            slots: vec![SlotRecord {
                slot: "s".into(),
                policy: "P".into(),
                args: vec![EntityId::new("urn:a")],
                verdict: SlotVerdict::No,
                rule: None,
                hash: Some("ab".into()),
                failures: vec![],
                detail: None,
            }],
            response: None,
            outcome: Outcome::Denied { slot: "s".into(), reason: "no".into() },
        }
    }

    fn t() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn chain_links_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.log");
        let log = DecisionLog::open(&path).unwrap();
        let a = log.append(draft("a"), t()).unwrap();
        let b = log.append(draft("b"), t()).unwrap();
        assert_eq!(a.prev_hash, GENESIS);
        assert_eq!(b.prev_hash, a.hash);
        assert!(matches!(log.append(draft("a"), t()), Err(LogError::DuplicateRequestId(_))));
        drop(log);
        let log = DecisionLog::open(&path).unwrap();
        assert_eq!(log.get("b").unwrap(), b);
        let c = log.append(draft("c"), t()).unwrap();
        assert_eq!((c.seq, c.prev_hash.as_str()), (2, b.hash.as_str()));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 3);
    }

    #[test]
    fn any_edit_breaks_the_chain() {
        let log = DecisionLog::in_memory();
        let lines: Vec<String> = ["a", "b", "c"].iter().map(|id| log.append(draft(id), t()).unwrap().to_line()).collect();
        let text = lines.join("\n");
        assert_eq!(read_chain(text.as_bytes()).unwrap().len(), 3);
        let edited = text.replacen(r#""x":"b""#, r#""x":"B""#, 1);
        assert!(matches!(read_chain(edited.as_bytes()), Err(LogError::Corrupt { line: 2, .. })));
        let dropped = [lines[0].clone(), lines[2].clone()].join("\n");
        assert!(matches!(read_chain(dropped.as_bytes()), Err(LogError::Corrupt { line: 2, .. })));
        let swapped = [lines[1].clone(), lines[0].clone()].join("\n");
        assert!(read_chain(swapped.as_bytes()).is_err());
    }
}
