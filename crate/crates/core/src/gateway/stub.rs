use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::{apply_stop, l2_normalize, Embedder, GatewayError, GenerationRequest, Generator};
use crate::tokenize::tokenize;

type Respond = dyn Fn(&str) -> Result<String, GatewayError> + Send + Sync;

/// In-process generator driven by a closure over the prompt.
pub struct StubGenerator {
    respond: Box<Respond>,
}

impl std::fmt::Debug for StubGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StubGenerator").finish_non_exhaustive()
    }
}

impl StubGenerator {
    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&str) -> Result<String, GatewayError> + Send + Sync + 'static,
    {
        StubGenerator { respond: Box::new(f) }
    }

    /// Returns the prompt unchanged.
    pub fn echo() -> Self {
        Self::from_fn(|p| Ok(p.to_string()))
    }

    /// Always returns `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        let text = text.into();
        Self::from_fn(move |_| Ok(text.clone()))
    }

    /// Exact prompt lookup; unknown prompts fail.
    pub fn canned(map: HashMap<String, String>) -> Self {
        Self::from_fn(move |p| map.get(p).cloned().ok_or(GatewayError::NoStubResponse))
    }

    /// Behaves like an unreachable endpoint after the retry budget.
    pub fn unavailable() -> Self {
        Self::from_fn(|_| Err(GatewayError::Exhausted { attempts: 3, last: "stub endpoint unavailable".into() }))
    }
}

impl Generator for StubGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        req.validate()?;
        Ok(apply_stop((self.respond)(&req.prompt)?, &req.stop))
    }
}

/// Deterministic offline embedder.
///
/// Every token maps to a pseudo-random Gaussian vector seeded from the
/// SHA-256 of the token; a text embeds as the normalized sum of its token
/// vectors, so texts sharing vocabulary land close together. Texts with no
/// tokens hash as a whole. Output is stable across runs and platforms.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        HashEmbedder { dim: dim.max(1) }
    }

    fn seeded_vector(&self, key: &str) -> Vec<f32> {
        let digest = Sha256::digest(key.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn embed_one(&self, text: &str, cache: &mut HashMap<String, Vec<f32>>) -> Result<Vec<f32>, GatewayError> {
        let tokens = tokenize(text);
        let mut acc = vec![0f32; self.dim];
        if tokens.is_empty() {
            acc = self.seeded_vector(&format!("\u{0}text:{text}"));
        } else {
            for tok in tokens {
                let v = cache.entry(tok).or_insert_with_key(|k| self.seeded_vector(k));
                acc.iter_mut().zip(v.iter()).for_each(|(a, b)| *a += *b);
            }
        }
        l2_normalize(&mut acc)?;
        Ok(acc)
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let mut cache = HashMap::new();
        texts.iter().map(|t| self.embed_one(t, &mut cache)).collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }
}

/// Embedder whose service is always down; exercises degraded retrieval.
#[derive(Debug, Clone, Copy)]
pub struct FailingEmbedder {
    pub dim: usize,
}

impl Embedder for FailingEmbedder {
    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Err(GatewayError::Exhausted { attempts: 3, last: "embedding service unavailable".into() })
    }

    fn dim(&self) -> usize {
        self.dim
    }
}
