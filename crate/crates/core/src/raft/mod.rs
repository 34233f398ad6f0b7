//! RAFT training data: prompt assembly, train/test splits, missing-context
//! test variants and IDK augmentation.

mod build;
mod dataset;
mod prompt;
mod split;

use serde::{Deserialize, Serialize};

use crate::corpus::{Category, CorpusError};
use crate::retrieval::RetrievalError;

pub use build::{augment_with_idk, build_raft_example, idk_count, make_missing_context};
pub use dataset::{
    build_raft_datasets, write_datasets, DatasetCounts, DatasetManifest, RaftBuildConfig, RaftDatasets,
    TrainingHyperparameters, MANIFEST_FILE, TEST_FILE, TEST_MISSING_CONTEXT_FILE, TRAIN_FILE,
};
pub use prompt::{render_context, render_raft_prompt, NO_CONTEXT_BLOCK};
pub use split::{apportion_split, assign_splits, CategorySplit, SplitPlan};

pub const DEFAULT_IDK_LABEL: &str =
    "I don't know. The provided context does not contain enough information to answer this question.";

#[derive(Debug, thiserror::Error)]
pub enum RaftError {
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("cannot give every non-empty category a test example: {0}")]
    Infeasible(String),
    #[error("invalid IDK policy: {0}")]
    InvalidPolicy(String),
    #[error("example {0} has no source document")]
    NoSource(String),
    #[error("chunk {0} is not in the index")]
    UnknownChunk(String),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One line of a RAFT dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaftExample {
    pub example_id: String,
    pub question: String,
    pub prompt: String,
    pub answer: String,
    /// Chunks present in `prompt`, in rank order.
    pub chunk_ids: Vec<String>,
    pub source_doc_id: Option<String>,
    pub category: Option<Category>,
    pub split: Split,
    pub missing_context: bool,
    pub rafs_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    /// Upper bound on rendered prompt length, in characters.
    pub max_prompt_chars: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig { max_prompt_chars: 32_000 }
    }
}

/// Which training examples get an IDK copy, and what it answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdkPolicy {
    /// Share of the training set, in `[0, 1]`, that is duplicated.
    pub fraction: f64,
    pub idk_label: String,
    pub seed: u64,
}

impl Default for IdkPolicy {
    fn default() -> Self {
        IdkPolicy { fraction: 0.1, idk_label: DEFAULT_IDK_LABEL.to_string(), seed: 0 }
    }
}

impl IdkPolicy {
    pub fn validate(&self) -> Result<(), RaftError> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(RaftError::InvalidPolicy(format!("fraction must lie in [0, 1], got {}", self.fraction)));
        }
        if self.idk_label.trim().is_empty() {
            return Err(RaftError::InvalidPolicy("empty IDK label".into()));
        }
        Ok(())
    }
}
