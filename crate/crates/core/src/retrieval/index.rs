use std::collections::HashMap;
use std::path::Path;

use super::{
    rrf_fuse, AccessFilter, AclTable, Bm25Index, Bm25Params, RetrievalConfig, RetrievalError, RetrievalResult,
    RetrievedChunk, ScoredChunk, VectorIndex,
};
use crate::corpus::Chunk;
use crate::gateway::Embedder;

const EMBED_BATCH: usize = 64;

/// Immutable lexical + vector index over one chunk set. Searches take
/// `&self` and may run concurrently; rebuilding produces a new value.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    chunks: Vec<Chunk>,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    acl: AclTable,
    lexical: Bm25Index,
    vectors: VectorIndex,
}

impl SearchIndex {
    /// Embeds every chunk (in batches) and builds both indexes.
    pub fn build(chunks: Vec<Chunk>, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        let mut rows = Vec::with_capacity(chunks.len());
        for batch in chunks.chunks(EMBED_BATCH) {
            let texts: Vec<String> = batch.iter().map(|c| c.text.clone()).collect();
            rows.extend(embedder.embed(&texts)?);
        }
        Self::from_embeddings(chunks, rows)
    }

    /// Builds from precomputed chunk embeddings (one row per chunk).
    pub fn from_embeddings(chunks: Vec<Chunk>, rows: Vec<Vec<f32>>) -> Result<Self, RetrievalError> {
        if rows.len() != chunks.len() {
            return Err(RetrievalError::Corrupt(format!("{} embeddings for {} chunks", rows.len(), chunks.len())));
        }
        let acl = AclTable::build(&chunks);
        let lexical = Bm25Index::build(&chunks, &acl);
        Self::assemble(chunks, acl, lexical, VectorIndex::from_rows(rows)?)
    }

    pub(crate) fn assemble(
        chunks: Vec<Chunk>,
        acl: AclTable,
        lexical: Bm25Index,
        vectors: VectorIndex,
    ) -> Result<Self, RetrievalError> {
        let ids: Vec<String> = chunks.iter().map(|c| c.chunk_id.clone()).collect();
        let by_id: HashMap<String, usize> = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        if by_id.len() != ids.len() {
            return Err(RetrievalError::Corrupt("duplicate chunk ids".into()));
        }
        if lexical.len() != chunks.len() || (!chunks.is_empty() && vectors.len() != chunks.len()) {
            return Err(RetrievalError::OutOfDate);
        }
        Ok(SearchIndex { chunks, ids, by_id, acl, lexical, vectors })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&Chunk> {
        self.by_id.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.dim()
    }

    pub(crate) fn lexical(&self) -> &Bm25Index {
        &self.lexical
    }

    pub(crate) fn vectors(&self) -> &VectorIndex {
        &self.vectors
    }

    /// Okapi BM25 over the chunks `filter` authorizes.
    pub fn bm25_search(
        &self,
        query: &str,
        filter: &AccessFilter,
        depth: usize,
        params: Bm25Params,
    ) -> Vec<ScoredChunk> {
        let mask = self.acl.mask(filter);
        self.lexical
            .search(query, &mask, &self.ids, depth, params)
            .into_iter()
            .map(|(i, score)| ScoredChunk { chunk_id: self.ids[i].clone(), score })
            .collect()
    }

    /// Cosine ranking of authorized chunks against a unit query vector.
    pub fn vector_search(
        &self,
        query_embedding: &[f32],
        filter: &AccessFilter,
        depth: usize,
    ) -> Result<Vec<ScoredChunk>, RetrievalError> {
        let mask = self.acl.mask(filter);
        Ok(self
            .vectors
            .search(query_embedding, &mask, &self.ids, depth)?
            .into_iter()
            .map(|(i, score)| ScoredChunk { chunk_id: self.ids[i].clone(), score })
            .collect())
    }

    /// BM25 and vector rankings fused with RRF. If the embedding service
    /// fails, the lexical ranking alone is fused and the result is flagged
    /// as degraded.
    pub fn hybrid_search(
        &self,
        query: &str,
        filter: &AccessFilter,
        cfg: &RetrievalConfig,
        embedder: &dyn Embedder,
    ) -> Result<RetrievalResult, RetrievalError> {
        cfg.validate()?;
        if query.trim().is_empty() || self.acl.mask(filter).none_allowed() {
            return Ok(RetrievalResult::default());
        }
        let lexical: Vec<String> =
            self.bm25_search(query, filter, cfg.candidate_depth, cfg.bm25()).into_iter().map(|s| s.chunk_id).collect();

        let (semantic, degraded) = match embedder.embed(&[query.to_string()]) {
            Ok(mut v) if v.len() == 1 => {
                let q = v.pop().unwrap_or_default();
                let ranked = self.vector_search(&q, filter, cfg.candidate_depth)?;
                (ranked.into_iter().map(|s| s.chunk_id).collect(), false)
            }
            Ok(v) => {
                tracing::warn!(count = v.len(), "embedder returned wrong number of vectors; lexical only");
                (Vec::new(), true)
            }
            Err(e) => {
                tracing::warn!(error = %e, "query embedding failed; lexical only");
                (Vec::new(), true)
            }
        };

        let hits = rrf_fuse(&[lexical, semantic], cfg.rrf_k, cfg.top_n)
            .into_iter()
            .map(|h| RetrievedChunk {
                chunk_id: h.chunk_id,
                fused_score: h.score,
                lex_rank: h.ranks[0],
                sem_rank: h.ranks[1],
            })
            .collect();
        Ok(RetrievalResult { hits, degraded })
    }

    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        super::persist::save(self, dir)
    }

    /// Loads a persisted index and checks it against `chunks`.
    pub fn load(dir: &Path, chunks: Vec<Chunk>) -> Result<Self, RetrievalError> {
        super::persist::load(dir, chunks)
    }
}
