//! Client layer for the three remote model capabilities (generation,
//! embedding, sequence scoring) with deterministic local stand-ins.

mod config;
mod limiter;
mod oracle;
mod remote;
mod stub;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use config::{GatewayConfig, GatewayMode};
pub use limiter::InflightLimiter;
pub use oracle::LexicalOracleScorer;
pub use remote::{
    RemoteClient, RemoteEmbedder, RemoteGenerator, RemoteScorer, RequestTemplate, RetryPolicy, Unconfigured,
};
pub use stub::{FailingEmbedder, HashEmbedder, StubGenerator};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gateway endpoint not configured: {0}")]
    NotConfigured(&'static str),
    #[error("request failed after {attempts} attempt(s): {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("malformed service response: {0}")]
    BadResponse(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("stub has no response for this prompt")]
    NoStubResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_tokens: u32,
    pub temperature: f32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        GenerationRequest { prompt: prompt.into(), max_tokens: 1024, temperature: 0.0, stop: Vec::new() }
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn with_stop(mut self, stop: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.stop = stop.into_iter().map(Into::into).collect();
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt must not be empty".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be non-negative".into()));
        }
        Ok(())
    }
}

/// Cuts `text` at the earliest occurrence of any stop marker.
pub fn apply_stop(mut text: String, stop: &[String]) -> String {
    if let Some(cut) = stop.iter().filter(|s| !s.is_empty()).filter_map(|s| text.find(s.as_str())).min() {
        text.truncate(cut);
    }
    text
}

/// Mean per-token log-likelihood of a target sequence given a source.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct SequenceScore(f64);

impl SequenceScore {
    pub fn new(value: f64) -> Result<Self, GatewayError> {
        if value.is_nan() || value > 0.0 {
            return Err(GatewayError::BadResponse(format!("sequence score must be <= 0, got {value}")));
        }
        Ok(SequenceScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError>;
}

pub trait Embedder: Send + Sync {
    /// One L2-normalized vector per input text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError>;

    fn dim(&self) -> usize;
}

pub trait SequenceScorer: Send + Sync {
    /// Log-likelihood of `prefix + target` given `source`.
    fn score(&self, source: &str, target: &str, prefix: &str) -> Result<SequenceScore, GatewayError>;
}

/// The three capabilities bundled behind trait objects.
#[derive(Clone)]
pub struct Gateway {
    pub generator: Arc<dyn Generator>,
    pub embedder: Arc<dyn Embedder>,
    pub scorer: Arc<dyn SequenceScorer>,
}

impl Gateway {
    /// Offline gateway: template-aware stub generator, hash embedder and the
    /// lexical oracle.
    pub fn stub() -> Self {
        Gateway {
            generator: Arc::new(crate::stubs::dispatching()),
            embedder: Arc::new(HashEmbedder::default()),
            scorer: Arc::new(LexicalOracleScorer),
        }
    }

    pub fn from_config(cfg: &GatewayConfig) -> Self {
        match cfg.mode {
            GatewayMode::Stub => {
                Gateway { embedder: Arc::new(HashEmbedder::new(cfg.embed_dim.unwrap_or(64))), ..Self::stub() }
            }
            GatewayMode::Remote => {
                let client = Arc::new(RemoteClient::new(cfg));
                let generator: Arc<dyn Generator> = match &cfg.generate_url {
                    Some(url) => {
                        Arc::new(RemoteGenerator::new(client.clone(), url.clone(), cfg.generate_template.clone()))
                    }
                    None => Arc::new(Unconfigured("gateway.generate_url")),
                };
                let embedder: Arc<dyn Embedder> = match &cfg.embed_url {
                    Some(url) => Arc::new(RemoteEmbedder::new(
                        client.clone(),
                        url.clone(),
                        cfg.embed_template.clone(),
                        cfg.embed_dim,
                    )),
                    None => Arc::new(Unconfigured("gateway.embed_url")),
                };
                let scorer: Arc<dyn SequenceScorer> = match &cfg.score_url {
                    Some(url) => Arc::new(RemoteScorer::new(client, url.clone(), cfg.score_template.clone())),
                    None => Arc::new(Unconfigured("gateway.score_url")),
                };
                Gateway { generator, embedder, scorer }
            }
        }
    }

    pub fn with_generator(mut self, generator: Arc<dyn Generator>) -> Self {
        self.generator = generator;
        self
    }

    pub fn with_embedder(mut self, embedder: Arc<dyn Embedder>) -> Self {
        self.embedder = embedder;
        self
    }

    pub fn with_scorer(mut self, scorer: Arc<dyn SequenceScorer>) -> Self {
        self.scorer = scorer;
        self
    }
}

pub(crate) fn l2_normalize(v: &mut [f32]) -> Result<(), GatewayError> {
    let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(GatewayError::BadResponse("embedding has zero or non-finite norm".into()));
    }
    for x in v.iter_mut() {
        *x = (f64::from(*x) / norm) as f32;
    }
    Ok(())
}
