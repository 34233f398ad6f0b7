//! Document corpus: ingestion filtering, fixed-size character chunking,
//! newline-delimited JSON persistence and the Q&A history store.

mod chunk;
mod history;
mod ingest;
mod store;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use chunk::{chunk_document, chunk_spans};
pub use history::{HistoryEntry, HistoryStore};
pub use ingest::{ingest, IngestStats, PatternMap};
pub use store::{read_jsonl, write_jsonl, CorpusStore, CHUNKS_FILE, DOCS_FILE, HISTORY_FILE};

/// A set of access-group names. Empty means public.
pub type AccessGroups = BTreeSet<String>;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("empty document")]
    EmptyDocument,
    #[error("invalid corpus config: {0}")]
    InvalidConfig(String),
    #[error("history question must not be empty")]
    EmptyQuestion,
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("invalid pattern {pattern:?}: {reason}")]
    InvalidPattern { pattern: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {source}")]
    Json {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CorpusError::Io { path: path.as_ref().display().to_string(), source }
    }
}

/// Document categories used for per-category dataset splits.
///
/// Declaration order is the canonical ordering used for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    ParameterReference,
    Timing,
    DevOps,
    DesignGuide,
    CommandReference,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::ParameterReference,
        Category::Timing,
        Category::DevOps,
        Category::DesignGuide,
        Category::CommandReference,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::ParameterReference => "ParameterReference",
            Category::Timing => "Timing",
            Category::DevOps => "DevOps",
            Category::DesignGuide => "DesignGuide",
            Category::CommandReference => "CommandReference",
            Category::Other => "Other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let wanted = s.trim();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| CorpusError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub body: String,
    pub category: Category,
    pub access_groups: AccessGroups,
    pub source_path: String,
}

impl Document {
    /// Body length in characters (not bytes).
    pub fn char_len(&self) -> usize {
        self.body.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub seq: usize,
    /// Character offset into the parent body.
    pub start: usize,
    /// Exclusive character offset.
    pub end: usize,
    pub text: String,
    pub category: Category,
    pub access_groups: AccessGroups,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub chunk_size: usize,
    pub overlap: usize,
    pub min_doc_chars: usize,
    pub max_doc_chars: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { chunk_size: 2000, overlap: 200, min_doc_chars: 1000, max_doc_chars: 10_000 }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size == 0 || self.overlap >= self.chunk_size {
            return Err(CorpusError::InvalidConfig(format!(
                "overlap ({}) must be smaller than chunk_size ({})",
                self.overlap, self.chunk_size
            )));
        }
        if self.min_doc_chars > self.max_doc_chars {
            return Err(CorpusError::InvalidConfig(format!(
                "min_doc_chars ({}) exceeds max_doc_chars ({})",
                self.min_doc_chars, self.max_doc_chars
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Drops documents shorter than `min_doc_chars` and truncates bodies longer
/// than `max_doc_chars` to their leading characters. Input order is kept.
pub fn filter_and_truncate(docs: Vec<Document>, cfg: &CorpusConfig) -> Vec<Document> {
    docs.into_iter()
        .filter(|d| d.char_len() >= cfg.min_doc_chars)
        .map(|mut d| {
            if let Some((byte_idx, _)) = d.body.char_indices().nth(cfg.max_doc_chars) {
                d.body.truncate(byte_idx);
            }
            d
        })
        .collect()
}
