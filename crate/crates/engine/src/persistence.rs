//! Append-only audit stores.
//!
//! Every record is one line:
//!
//! ```text
//! <len> <checksum> <json>\n
//! ```
//!
//! `len` is the byte length of the JSON payload in decimal, `checksum` the
//! first 16 hex digits of its sha256. Appends flush and sync before
//! reporting success. On open, the file is scanned from the front; the
//! first record that fails its length, checksum, or parse marks the end of
//! the trustworthy prefix and the file is truncated there, so a crash
//! mid-write costs at most the record being written.
//!
//! The contribution store doubles as the idempotency ledger: an event id
//! that is already recorded was already handled.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coc::CocAnalysis;
use crate::contribution::{ContributionKind, ContributionVerdict};
use crate::orchestrator::Action;

/// What a store needs from its records: the repository they belong to, and
/// optionally a unique key (the idempotency handle).
pub trait Keyed {
    fn key(&self) -> Option<&str>;
    fn repo(&self) -> &str;
}

/// What happened to one handled contribution, as written to the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContributionRecord {
    pub event_id: String,
    pub repo: String,
    pub author: String,
    pub kind: ContributionKind,
    /// sha256 of the contribution body; the body itself is not stored.
    pub body_digest: String,
    pub received_at: DateTime<Utc>,
    pub recorded_at: DateTime<Utc>,
    /// Absent when the plan never reached classification.
    pub verdict: Option<ContributionVerdict>,
    /// The actions the plan called for, in order.
    pub planned: Vec<Action>,
    /// What actually happened to each planned action.
    pub actions: Vec<ActionRecord>,
    pub notified: bool,
    /// The orchestration steps the decision walked through.
    pub decision_trace: Vec<String>,
}

impl Keyed for ContributionRecord {
    fn key(&self) -> Option<&str> {
        Some(&self.event_id)
    }

    fn repo(&self) -> &str {
        &self.repo
    }
}

/// One executed (or suppressed, or failed) action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    /// Action kind, e.g. "ProposeCocPullRequest".
    pub action: String,
    /// Forge artifact the action touched or created.
    pub target: Option<String>,
    pub outcome: ActionOutcome,
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionOutcome {
    Executed,
    /// The idempotency key had already been executed; nothing new happened.
    Deduplicated,
    Failed,
}

impl std::fmt::Display for ActionOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ActionOutcome::Executed => f.write_str("executed"),
            ActionOutcome::Deduplicated => f.write_str("deduplicated"),
            ActionOutcome::Failed => f.write_str("failed"),
        }
    }
}

/// One conduct-document analysis, as written to the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CocRecord {
    pub repo: String,
    pub recorded_at: DateTime<Utc>,
    /// What prompted the analysis: "cold_cache" (nothing cached for the
    /// repo), "changed" (cached digest no longer matched), or "manual".
    pub trigger: String,
    /// Path of the document, when one was found.
    pub path: Option<String>,
    /// Absent when the repository has no conduct document.
    pub analysis: Option<CocAnalysis>,
}

impl Keyed for CocRecord {
    fn key(&self) -> Option<&str> {
        None
    }

    fn repo(&self) -> &str {
        &self.repo
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("record does not serialize: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error("record with key {0:?} already stored")]
    Duplicate(String),
}

/// One append-only store of `T` records.
pub struct RecordStore<T> {
    path: PathBuf,
    file: Mutex<File>,
    records: Mutex<Vec<T>>,
    keys: Mutex<HashMap<String, usize>>,
    _marker: PhantomData<T>,
}

fn checksum(payload: &[u8]) -> String {
    hex::encode(&Sha256::digest(payload)[..8])
}

/// Parses the trustworthy prefix of a store file. Returns the records and
/// the byte offset where trust ends.
fn scan<T: DeserializeOwned>(data: &[u8]) -> (Vec<T>, usize) {
    let mut records = Vec::new();
    let mut good_end = 0;
    let mut pos = 0;

    'scan: while pos < data.len() {
        let rest = &data[pos..];
        let Some(len_end) = rest.iter().position(|&b| b == b' ') else {
            break;
        };
        let Ok(len_str) = std::str::from_utf8(&rest[..len_end]) else {
            break;
        };
        let Ok(len) = len_str.parse::<usize>() else {
            break;
        };
        let sum_start = len_end + 1;
        let Some(sum_len) = rest[sum_start..].iter().position(|&b| b == b' ') else {
            break;
        };
        let sum_end = sum_start + sum_len;
        let payload_start = sum_end + 1;
        let payload_end = payload_start + len;
        if payload_end + 1 > rest.len() {
            break; // truncated tail
        }
        if rest[payload_end] != b'\n' {
            break;
        }
        let payload = &rest[payload_start..payload_end];
        if checksum(payload) != std::str::from_utf8(&rest[sum_start..sum_end]).unwrap_or("") {
            break 'scan;
        }
        let Ok(record) = serde_json::from_slice::<T>(payload) else {
            break;
        };
        records.push(record);
        pos += payload_end + 1;
        good_end = pos;
    }

    (records, good_end)
}

impl<T: Serialize + DeserializeOwned + Clone + Keyed> RecordStore<T> {
    /// Opens (creating if needed) and recovers the store at `path`.
    pub fn open(path: impl Into<PathBuf>) -> Result<RecordStore<T>, StoreError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let data = match std::fs::read(&path) {
            Ok(data) => data,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let (records, good_end) = scan::<T>(&data);
        if good_end < data.len() {
            // drop the untrustworthy tail before appending anything new
            let file = OpenOptions::new().write(true).create(true).open(&path)?;
            file.set_len(good_end as u64)?;
            file.sync_data()?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let keys = records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.key().map(|k| (k.to_string(), i)))
            .collect();
        Ok(RecordStore {
            path,
            file: Mutex::new(file),
            records: Mutex::new(records),
            keys: Mutex::new(keys),
            _marker: PhantomData,
        })
    }

    /// Appends one record durably: the line is flushed and synced before
    /// this returns. A record whose key is already stored is rejected.
    pub fn append(&self, record: &T) -> Result<(), StoreError> {
        if let Some(key) = record.key() {
            if self.contains_key(key) {
                return Err(StoreError::Duplicate(key.to_string()));
            }
        }
        let payload = serde_json::to_vec(record)?;
        let mut line = Vec::with_capacity(payload.len() + 32);
        line.extend_from_slice(format!("{} {} ", payload.len(), checksum(&payload)).as_bytes());
        line.extend_from_slice(&payload);
        line.push(b'\n');
        {
            let mut file = self.file.lock().unwrap();
            file.write_all(&line)?;
            file.flush()?;
            file.sync_data()?;
        }
        let mut records = self.records.lock().unwrap();
        if let Some(key) = record.key() {
            self.keys
                .lock()
                .unwrap()
                .insert(key.to_string(), records.len());
        }
        records.push(record.clone());
        Ok(())
    }

    pub fn contains_key(&self, key: &str) -> bool {
        self.keys.lock().unwrap().contains_key(key)
    }

    pub fn find_by_key(&self, key: &str) -> Option<T> {
        let keys = self.keys.lock().unwrap();
        let records = self.records.lock().unwrap();
        keys.get(key).map(|&i| records[i].clone())
    }

    pub fn records(&self) -> Vec<T> {
        self.records.lock().unwrap().clone()
    }

    /// All records for one repository, in append order.
    pub fn query_by_repo(&self, repo: &str) -> Vec<T> {
        self.records
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.repo() == repo)
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn join_ids<I: std::fmt::Display>(items: impl IntoIterator<Item = I>) -> String {
    items
        .into_iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

/// Renders contribution records as CSV, one row per record.
pub fn contributions_to_csv(records: &[ContributionRecord]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "event_id",
        "repo",
        "author",
        "kind",
        "received_at",
        "classification",
        "flags",
        "backend",
        "escalated",
        "planned",
        "actions",
        "notified",
        "trace",
    ])?;
    for r in records {
        let kind = serde_json::to_value(r.kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let (classification, flags, backend, escalated) = match &r.verdict {
            Some(v) => (
                v.classification.to_string(),
                join_ids(v.flags.iter()),
                v.backend.to_string(),
                v.escalated.to_string(),
            ),
            None => (String::new(), String::new(), String::new(), String::new()),
        };
        let planned = join_ids(r.planned.iter().map(Action::kind));
        let actions = join_ids(
            r.actions
                .iter()
                .map(|a| format!("{}:{}", a.action, a.outcome)),
        );
        writer.write_record([
            r.event_id.as_str(),
            r.repo.as_str(),
            r.author.as_str(),
            kind.as_str(),
            &r.received_at.to_rfc3339(),
            &classification,
            &flags,
            &backend,
            &escalated,
            &planned,
            &actions,
            &r.notified.to_string(),
            &r.decision_trace.join(";"),
        ])?;
    }
    String::from_utf8(writer.into_inner().expect("csv writer finishes"))
        .map_err(|e| csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}

/// Renders conduct-document records as CSV, one row per record.
pub fn coc_to_csv(records: &[CocRecord]) -> Result<String, csv::Error> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "repo",
        "recorded_at",
        "trigger",
        "path",
        "status",
        "version",
        "detected",
        "missing",
        "effective_lines",
        "digest",
    ])?;
    for r in records {
        let (status, version, detected, missing, lines, digest) = match &r.analysis {
            Some(a) => (
                serde_json::to_value(a.status)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                a.version.clone().unwrap_or_default(),
                join_ids(a.detected.iter()),
                join_ids(a.missing.iter()),
                a.effective_lines.to_string(),
                a.digest.clone(),
            ),
            None => (
                "missing".to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
            ),
        };
        writer.write_record([
            r.repo.as_str(),
            &r.recorded_at.to_rfc3339(),
            r.trigger.as_str(),
            r.path.as_deref().unwrap_or(""),
            &status,
            &version,
            &detected,
            &missing,
            &lines,
            &digest,
        ])?;
    }
    String::from_utf8(writer.into_inner().expect("csv writer finishes"))
        .map_err(|e| csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
}
