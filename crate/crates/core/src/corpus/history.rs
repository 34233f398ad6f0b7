use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{read_jsonl, CorpusError};

/// A past user question with the response the assistant gave.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub entry_id: String,
    pub question: String,
    pub response: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<String>,
}

impl HistoryEntry {
    /// A new entry stamped now; the id is assigned by the store on append.
    pub fn new(question: impl Into<String>, response: impl Into<String>, user_id: Option<String>) -> Self {
        HistoryEntry {
            entry_id: String::new(),
            question: question.into(),
            response: response.into(),
            timestamp: Utc::now(),
            user_id,
        }
    }
}

/// Append-only history log. Appends are serialized; readers get a
/// consistent snapshot of everything appended before the read started.
#[derive(Debug)]
pub struct HistoryStore {
    path: Option<PathBuf>,
    entries: RwLock<Vec<HistoryEntry>>,
    writer: Mutex<Option<File>>,
}

impl HistoryStore {
    /// Opens (or creates) a file-backed store, loading existing entries.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, CorpusError> {
        let path = path.into();
        let entries = read_jsonl(&path)?;
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CorpusError::io(&path, e))?;
        Ok(HistoryStore { path: Some(path), entries: RwLock::new(entries), writer: Mutex::new(Some(file)) })
    }

    pub fn in_memory() -> Self {
        HistoryStore { path: None, entries: RwLock::new(Vec::new()), writer: Mutex::new(None) }
    }

    /// Appends an entry and returns its id. Entries without an id get the
    /// next sequential one.
    pub fn append(&self, mut entry: HistoryEntry) -> Result<String, CorpusError> {
        if entry.question.trim().is_empty() {
            return Err(CorpusError::EmptyQuestion);
        }
        let mut writer = self.writer.lock();
        if entry.entry_id.is_empty() {
            entry.entry_id = format!("h{:08}", self.entries.read().len() + 1);
        }
        if let (Some(file), Some(path)) = (writer.as_mut(), self.path.as_ref()) {
            let mut line = serde_json::to_vec(&entry).map_err(|source| CorpusError::Json {
                path: path.display().to_string(),
                line: 0,
                source,
            })?;
            line.push(b'\n');
            file.write_all(&line).and_then(|_| file.sync_data()).map_err(|e| CorpusError::io(path, e))?;
        }
        let id = entry.entry_id.clone();
        self.entries.write().push(entry);
        Ok(id)
    }

    /// The most recent `limit` entries, oldest first.
    pub fn fetch(&self, limit: usize) -> Vec<HistoryEntry> {
        let entries = self.entries.read();
        let skip = entries.len().saturating_sub(limit);
        entries[skip..].to_vec()
    }

    /// The most recent `limit` entries asked by `user_id` (`None`: anonymous
    /// queries), oldest first.
    pub fn fetch_for(&self, user_id: Option<&str>, limit: usize) -> Vec<HistoryEntry> {
        let entries = self.entries.read();
        let mut picked: Vec<HistoryEntry> =
            entries.iter().rev().filter(|e| e.user_id.as_deref() == user_id).take(limit).cloned().collect();
        picked.reverse();
        picked
    }

    pub fn all(&self) -> Vec<HistoryEntry> {
        self.entries.read().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
