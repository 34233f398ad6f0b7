//! The query service: user identity to access groups, filtered hybrid
//! retrieval, the RAG prompt (the RAFT template), generation and history.
//!
//! Handlers read an immutable [`IndexSnapshot`]; [`AssistantService::reload`]
//! swaps in a new one atomically while queries are in flight.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigError, KvConfig};
use crate::corpus::{AccessGroups, Category, Chunk, CorpusError, CorpusStore, HistoryEntry, HistoryStore};
use crate::gateway::{Embedder, Gateway, GatewayConfig, GenerationRequest, Generator};
use crate::raft::{render_raft_prompt, PromptConfig};
use crate::retrieval::{AccessFilter, RetrievalConfig, RetrievalError, Retriever, SearchIndex};

/// Environment variable naming the service config file.
pub const CONFIG_ENV: &str = "ASSISTANT_CONFIG";

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("users file line {line}: {message}")]
    UsersSyntax { line: usize, message: String },
    #[error("generation failed: {message}")]
    Generation { message: String, provenance: Vec<ProvenanceEntry>, degraded: bool },
    #[error("{CONFIG_ENV} is not set")]
    NoConfig,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `user_id -> groups`. Unknown users get no groups, which is exactly the
/// access of a public user.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UserDirectory {
    users: HashMap<String, AccessGroups>,
}

impl UserDirectory {
    /// One user per line: `user_id: group,group,...`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, ServiceError> {
        let mut users = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: &str| ServiceError::UsersSyntax { line: i + 1, message: message.to_string() };
            let (user, groups) = line.split_once(':').ok_or_else(|| err("expected `user_id: group,...`"))?;
            let user = user.trim();
            if user.is_empty() {
                return Err(err("empty user id"));
            }
            let groups: AccessGroups =
                groups.split(',').map(str::trim).filter(|g| !g.is_empty()).map(String::from).collect();
            if users.insert(user.to_string(), groups).is_some() {
                return Err(err(&format!("user {user} listed twice")));
            }
        }
        Ok(UserDirectory { users })
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ServiceError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, user_id: impl Into<String>, groups: AccessGroups) {
        self.users.insert(user_id.into(), groups);
    }

    pub fn groups_for(&self, user_id: &str) -> AccessGroups {
        self.users.get(user_id).cloned().unwrap_or_default()
    }

    pub fn filter_for(&self, user_id: &str) -> AccessFilter {
        AccessFilter::new(self.groups_for(user_id))
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub chunk_id: String,
    pub doc_id: String,
    pub category: Category,
    pub access_groups: AccessGroups,
    pub fused_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub answer: String,
    /// The chunks placed in the prompt, in prompt order.
    pub provenance: Vec<ProvenanceEntry>,
    /// Retrieval fell back to lexical ranking only.
    pub degraded: bool,
    pub timing_ms: u64,
    pub history_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub chunks: usize,
    pub public_chunks: usize,
    pub chunks_per_category: BTreeMap<Category, usize>,
    pub chunks_per_group: BTreeMap<String, usize>,
    pub embedding_dim: usize,
}

impl CorpusStats {
    pub fn of(index: &SearchIndex) -> Self {
        let mut stats = CorpusStats { chunks: index.len(), embedding_dim: index.dim(), ..Default::default() };
        let mut docs = BTreeSet::new();
        for c in index.chunks() {
            docs.insert(c.doc_id.as_str());
            *stats.chunks_per_category.entry(c.category).or_default() += 1;
            if c.access_groups.is_empty() {
                stats.public_chunks += 1;
            }
            for g in &c.access_groups {
                *stats.chunks_per_group.entry(g.clone()).or_default() += 1;
            }
        }
        stats.documents = docs.len();
        stats
    }
}

/// What a query reads: the retriever and the stats describing it.
pub struct IndexSnapshot {
    pub retriever: Retriever,
    pub stats: CorpusStats,
}

impl IndexSnapshot {
    pub fn new(retriever: Retriever) -> Self {
        let stats = CorpusStats::of(&retriever.index);
        IndexSnapshot { retriever, stats }
    }
}

pub struct AssistantService {
    snapshot: RwLock<Arc<IndexSnapshot>>,
    users: RwLock<Arc<UserDirectory>>,
    generator: Arc<dyn Generator>,
    history: HistoryStore,
    retrieval: RetrievalConfig,
    prompt: PromptConfig,
}

impl AssistantService {
    pub fn new(
        snapshot: IndexSnapshot,
        users: UserDirectory,
        generator: Arc<dyn Generator>,
        history: HistoryStore,
        retrieval: RetrievalConfig,
        prompt: PromptConfig,
    ) -> Result<Self, ServiceError> {
        retrieval.validate()?;
        Ok(AssistantService {
            snapshot: RwLock::new(Arc::new(snapshot)),
            users: RwLock::new(Arc::new(users)),
            generator,
            history,
            retrieval,
            prompt,
        })
    }

    /// Loads corpus, index, users and history as configured.
    pub fn open(cfg: &ServiceConfig) -> Result<Self, ServiceError> {
        let gateway = Gateway::from_config(&cfg.gateway);
        let store = CorpusStore::new(&cfg.corpus_dir);
        let index = open_index(store.load_chunks()?, &cfg.index_dir, gateway.embedder.as_ref())?;
        let users = match &cfg.users_file {
            Some(path) => UserDirectory::load(path)?,
            None => UserDirectory::default(),
        };
        let history = HistoryStore::open(&cfg.history_file)?;
        Self::new(
            IndexSnapshot::new(Retriever::new(Arc::new(index), gateway.embedder)),
            users,
            gateway.generator,
            history,
            cfg.retrieval,
            cfg.prompt,
        )
    }

    pub fn snapshot(&self) -> Arc<IndexSnapshot> {
        self.snapshot.read().clone()
    }

    /// Replaces the index. Queries already running finish on the old one.
    pub fn reload(&self, snapshot: IndexSnapshot) {
        *self.snapshot.write() = Arc::new(snapshot);
    }

    pub fn set_users(&self, users: UserDirectory) {
        *self.users.write() = Arc::new(users);
    }

    pub fn history(&self) -> &HistoryStore {
        &self.history
    }

    pub fn stats(&self) -> CorpusStats {
        self.snapshot().stats.clone()
    }

    pub fn retrieval_config(&self) -> RetrievalConfig {
        self.retrieval
    }

    /// Answers `question` for `user_id` from the chunks that user may read.
    /// `top_n` overrides the configured number of passages, capped at the
    /// candidate depth.
    pub fn handle_query(
        &self,
        user_id: &str,
        question: &str,
        top_n: Option<usize>,
    ) -> Result<QueryResponse, ServiceError> {
        if question.trim().is_empty() {
            return Err(ServiceError::EmptyQuestion);
        }
        let started = Instant::now();
        let snapshot = self.snapshot();
        let filter = self.users.read().filter_for(user_id);
        let mut cfg = self.retrieval;
        if let Some(n) = top_n {
            cfg.top_n = n.min(cfg.candidate_depth);
        }

        let result = snapshot.retriever.search(question, &filter, &cfg)?;
        let index = &snapshot.retriever.index;
        let chunks: Vec<&Chunk> = result
            .hits
            .iter()
            .map(|h| {
                index.chunk(&h.chunk_id).ok_or_else(|| RetrievalError::Corrupt(format!("unknown chunk {}", h.chunk_id)))
            })
            .collect::<Result<_, _>>()?;
        let (prompt, kept) = render_raft_prompt(question, &chunks, self.prompt.max_prompt_chars);
        let provenance: Vec<ProvenanceEntry> = chunks[..kept]
            .iter()
            .zip(&result.hits)
            .map(|(c, h)| ProvenanceEntry {
                chunk_id: c.chunk_id.clone(),
                doc_id: c.doc_id.clone(),
                category: c.category,
                access_groups: c.access_groups.clone(),
                fused_score: h.fused_score,
            })
            .collect();

        let answer = match self.generator.generate(&GenerationRequest::new(prompt)) {
            Ok(a) => a.trim().to_string(),
            Err(e) => {
                tracing::warn!(error = %e, "generation failed");
                return Err(ServiceError::Generation { message: e.to_string(), provenance, degraded: result.degraded });
            }
        };
        let user = (!user_id.is_empty()).then(|| user_id.to_string());
        let history_id = self.history.append(HistoryEntry::new(question.trim(), answer.clone(), user))?;
        Ok(QueryResponse {
            answer,
            provenance,
            degraded: result.degraded,
            timing_ms: started.elapsed().as_millis() as u64,
            history_id,
        })
    }
}

/// Loads the persisted index in `dir`, or builds it from `chunks` when it is
/// missing or stale and tries to save the result.
pub fn open_index(chunks: Vec<Chunk>, dir: &Path, embedder: &dyn Embedder) -> Result<SearchIndex, ServiceError> {
    match SearchIndex::load(dir, chunks.clone()) {
        Ok(index) => Ok(index),
        Err(e) => {
            tracing::info!(dir = %dir.display(), reason = %e, "building index");
            let index = SearchIndex::build(chunks, embedder)?;
            if let Err(e) = index.save(dir) {
                tracing::warn!(error = %e, "could not save index");
            }
            Ok(index)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub corpus_dir: PathBuf,
    pub index_dir: PathBuf,
    pub users_file: Option<PathBuf>,
    pub history_file: PathBuf,
    pub bind: String,
    pub retrieval: RetrievalConfig,
    pub prompt: PromptConfig,
    pub gateway: GatewayConfig,
}

impl ServiceConfig {
    /// Reads the settings; relative paths are resolved against `base`.
    ///
    /// Keys: `corpus_dir` (required), `index_dir` (default
    /// `<corpus_dir>/index`), `users_file`, `history_file` (default
    /// `<corpus_dir>/history.jsonl`), `server.bind`, `retrieval.top_n`,
    /// `retrieval.rrf_k`, `retrieval.candidate_depth`, `retrieval.bm25_k1`,
    /// `retrieval.bm25_b`, `prompt.max_chars` and the `gateway.*` keys.
    pub fn from_kv(kv: &KvConfig, base: &Path) -> Result<Self, ConfigError> {
        let path = |p: &str| base.join(p);
        let corpus_dir = path(kv.require("corpus_dir")?);
        let d = RetrievalConfig::default();
        let retrieval = RetrievalConfig {
            top_n: kv.parsed_or("retrieval.top_n", d.top_n)?,
            rrf_k: kv.parsed_or("retrieval.rrf_k", d.rrf_k)?,
            candidate_depth: kv.parsed_or("retrieval.candidate_depth", d.candidate_depth)?,
            bm25_k1: kv.parsed_or("retrieval.bm25_k1", d.bm25_k1)?,
            bm25_b: kv.parsed_or("retrieval.bm25_b", d.bm25_b)?,
        };
        Ok(ServiceConfig {
            index_dir: kv.get("index_dir").map(path).unwrap_or_else(|| corpus_dir.join("index")),
            users_file: kv.get("users_file").map(path),
            history_file: kv
                .get("history_file")
                .map(path)
                .unwrap_or_else(|| corpus_dir.join(crate::corpus::HISTORY_FILE)),
            bind: kv.get("server.bind").unwrap_or("127.0.0.1:8080").to_string(),
            retrieval,
            prompt: PromptConfig {
                max_prompt_chars: kv.parsed_or("prompt.max_chars", PromptConfig::default().max_prompt_chars)?,
            },
            gateway: GatewayConfig::from_kv(kv)?,
            corpus_dir,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let kv = KvConfig::load(path)?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    /// Loads the file named by `ASSISTANT_CONFIG`.
    pub fn from_env() -> Result<Self, ServiceError> {
        let path = std::env::var_os(CONFIG_ENV).ok_or(ServiceError::NoConfig)?;
        Ok(Self::load(Path::new(&path))?)
    }
}
