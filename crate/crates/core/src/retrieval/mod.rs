//! Access-filtered hybrid retrieval.
//!
//! Both rankers apply the caller's [`AccessFilter`] before scoring: BM25
//! corpus statistics (document count, average length, document frequency)
//! are computed over the authorized chunks only, so results for a filter
//! are exactly the results a corpus containing only those chunks would give.

mod acl;
mod index;
mod lexical;
mod persist;
mod vector;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::AccessGroups;
use crate::gateway::Embedder;

pub use acl::{AclTable, AuthMask};
pub use index::SearchIndex;
pub use lexical::{Bm25Index, Bm25Params};
pub use persist::{INDEX_MAGIC, INDEX_VERSION};
pub use vector::VectorIndex;

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("query embedding has dimension {got}, index has {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid retrieval config: {0}")]
    InvalidConfig(String),
    #[error("embedding failed while building the index: {0}")]
    Embedding(#[from] crate::gateway::GatewayError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not an index file (bad magic): {0}")]
    BadMagic(String),
    #[error("unsupported index version {found} in {path} (expected {expected})")]
    UnsupportedVersion { path: String, found: u8, expected: u8 },
    #[error("corrupt index: {0}")]
    Corrupt(String),
    #[error("index does not match the corpus chunks; rebuild it")]
    OutOfDate,
}

/// The set of groups a user belongs to.
///
/// A chunk is authorized iff it is public (no groups) or shares at least
/// one group with the user.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessFilter {
    pub user_groups: AccessGroups,
}

impl AccessFilter {
    pub fn new(user_groups: AccessGroups) -> Self {
        AccessFilter { user_groups }
    }

    /// Public documents only.
    pub fn public() -> Self {
        Self::default()
    }

    pub fn from_groups<I, S>(groups: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        AccessFilter { user_groups: groups.into_iter().map(Into::into).collect() }
    }

    pub fn authorizes(&self, chunk_groups: &AccessGroups) -> bool {
        chunk_groups.is_empty() || !chunk_groups.is_disjoint(&self.user_groups)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_n: usize,
    pub rrf_k: f64,
    pub candidate_depth: usize,
    pub bm25_k1: f64,
    pub bm25_b: f64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { top_n: 10, rrf_k: 60.0, candidate_depth: 100, bm25_k1: 1.2, bm25_b: 0.75 }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: String| Err(RetrievalError::InvalidConfig(m));
        if self.top_n > self.candidate_depth {
            return bad(format!("top_n ({}) exceeds candidate_depth ({})", self.top_n, self.candidate_depth));
        }
        if !(self.rrf_k > 0.0) {
            return bad(format!("rrf_k must be positive, got {}", self.rrf_k));
        }
        if !(self.bm25_k1 > 0.0) {
            return bad(format!("bm25_k1 must be positive, got {}", self.bm25_k1));
        }
        if !(0.0..=1.0).contains(&self.bm25_b) {
            return bad(format!("bm25_b must lie in [0, 1], got {}", self.bm25_b));
        }
        Ok(())
    }

    pub fn bm25(&self) -> Bm25Params {
        Bm25Params { k1: self.bm25_k1, b: self.bm25_b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredChunk {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedChunk {
    pub chunk_id: String,
    pub fused_score: f64,
    pub lex_rank: Option<usize>,
    pub sem_rank: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<RetrievedChunk>,
    /// Set when the embedding service failed and only lexical ranking ran.
    pub degraded: bool,
}

impl RetrievalResult {
    pub fn chunk_ids(&self) -> Vec<String> {
        self.hits.iter().map(|h| h.chunk_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

/// An index paired with the embedder used for its query vectors.
#[derive(Clone)]
pub struct Retriever {
    pub index: Arc<SearchIndex>,
    pub embedder: Arc<dyn Embedder>,
}

impl Retriever {
    pub fn new(index: Arc<SearchIndex>, embedder: Arc<dyn Embedder>) -> Self {
        Retriever { index, embedder }
    }

    pub fn search(
        &self,
        query: &str,
        filter: &AccessFilter,
        cfg: &RetrievalConfig,
    ) -> Result<RetrievalResult, RetrievalError> {
        self.index.hybrid_search(query, filter, cfg, self.embedder.as_ref())
    }
}

/// One fused entry: the RRF score plus its 1-based rank in each input list.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedHit {
    pub chunk_id: String,
    pub score: f64,
    pub ranks: Vec<Option<usize>>,
}

/// Sorts by score descending, ties broken by id ascending.
pub(crate) fn rank_order(a_score: f64, a_id: &str, b_score: f64, b_id: &str) -> std::cmp::Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_id.cmp(b_id))
}

/// Reciprocal Rank Fusion: `score(id) = sum over lists containing id of
/// 1 / (k + rank)`, with 1-based ranks. Only the first occurrence of an id
/// within a list counts.
pub fn rrf_fuse(rankings: &[Vec<String>], k: f64, top_n: usize) -> Vec<FusedHit> {
    let mut fused: HashMap<&str, FusedHit> = HashMap::new();
    for (list_idx, list) in rankings.iter().enumerate() {
        for (pos, id) in list.iter().enumerate() {
            let hit = fused.entry(id.as_str()).or_insert_with(|| FusedHit {
                chunk_id: id.clone(),
                score: 0.0,
                ranks: vec![None; rankings.len()],
            });
            if hit.ranks[list_idx].is_some() {
                continue;
            }
            let rank = pos + 1;
            hit.ranks[list_idx] = Some(rank);
            hit.score += 1.0 / (k + rank as f64);
        }
    }
    let mut hits: Vec<FusedHit> = fused.into_values().collect();
    hits.sort_by(|a, b| rank_order(a.score, &a.chunk_id, b.score, &b.chunk_id));
    hits.truncate(top_n);
    hits
}
