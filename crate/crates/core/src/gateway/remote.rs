//! JSON-over-HTTP clients for remote model services.
//!
//! Request bodies are rendered from a small template so the client can talk
//! to different providers: every `{{name}}` placeholder is replaced by the
//! JSON encoding of the named value, and the result is read back through a
//! JSON pointer. See `docs/gateway.md` for the default schemas.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use parking_lot::Mutex;
use serde_json::{json, Value};

use super::{
    apply_stop, l2_normalize, Embedder, GatewayConfig, GatewayError, GenerationRequest, Generator, InflightLimiter,
    SequenceScore, SequenceScorer,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    /// Backoff before attempt `attempt + 1`, doubling from `base_delay`.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.saturating_sub(1).min(16))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTemplate {
    pub body: String,
    pub response_pointer: String,
}

impl RequestTemplate {
    pub fn default_generate() -> Self {
        RequestTemplate {
            body: r#"{"prompt": {{prompt}}, "max_tokens": {{max_tokens}}, "temperature": {{temperature}}, "stop": {{stop}}}"#
                .into(),
            response_pointer: "/text".into(),
        }
    }

    pub fn default_embed() -> Self {
        RequestTemplate { body: r#"{"input": {{texts}}}"#.into(), response_pointer: "/embeddings".into() }
    }

    pub fn default_score() -> Self {
        RequestTemplate {
            body: r#"{"source": {{source}}, "target": {{target}}, "prefix": {{prefix}}}"#.into(),
            response_pointer: "/score".into(),
        }
    }

    pub fn render(&self, vars: &[(&str, Value)]) -> Result<Value, GatewayError> {
        let mut body = self.body.clone();
        for (name, value) in vars {
            body = body.replace(&format!("{{{{{name}}}}}"), &value.to_string());
        }
        serde_json::from_str(&body)
            .map_err(|e| GatewayError::InvalidRequest(format!("request template does not render to JSON: {e}")))
    }

    pub fn extract<'a>(&self, response: &'a Value) -> Result<&'a Value, GatewayError> {
        response
            .pointer(&self.response_pointer)
            .ok_or_else(|| GatewayError::BadResponse(format!("no value at {}", self.response_pointer)))
    }
}

enum AttemptError {
    Transient(String),
    Fatal(String),
}

/// Shared HTTP client: retry with exponential backoff and a per-endpoint
/// bound on in-flight requests.
pub struct RemoteClient {
    agent: ureq::Agent,
    retry: RetryPolicy,
    api_key_env: Option<String>,
    max_inflight: usize,
    limiters: Mutex<HashMap<String, Arc<InflightLimiter>>>,
}

impl RemoteClient {
    pub fn new(cfg: &GatewayConfig) -> Self {
        let config =
            ureq::Agent::config_builder().timeout_global(Some(cfg.timeout)).http_status_as_error(false).build();
        RemoteClient {
            agent: ureq::Agent::new_with_config(config),
            retry: cfg.retry,
            api_key_env: cfg.api_key_env.clone(),
            max_inflight: cfg.max_inflight,
            limiters: Mutex::new(HashMap::new()),
        }
    }

    pub fn limiter_for(&self, url: &str) -> Arc<InflightLimiter> {
        self.limiters
            .lock()
            .entry(url.to_string())
            .or_insert_with(|| Arc::new(InflightLimiter::new(self.max_inflight)))
            .clone()
    }

    pub fn post_json(&self, url: &str, body: &Value) -> Result<Value, GatewayError> {
        let limiter = self.limiter_for(url);
        let max = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            let outcome = {
                let _permit = limiter.acquire();
                self.attempt(url, body)
            };
            match outcome {
                Ok(v) => return Ok(v),
                Err(AttemptError::Fatal(msg)) => return Err(GatewayError::Exhausted { attempts: attempt, last: msg }),
                Err(AttemptError::Transient(msg)) => {
                    tracing::warn!(url, attempt, error = %msg, "transient gateway failure");
                    last = msg;
                    if attempt < max {
                        std::thread::sleep(self.retry.delay_after(attempt));
                    }
                }
            }
        }
        Err(GatewayError::Exhausted { attempts: max, last })
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, AttemptError> {
        let mut req = self.agent.post(url).header("content-type", "application/json");
        if let Some(key) = self.api_key_env.as_deref().and_then(|name| std::env::var(name).ok()) {
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send(body.to_string()) {
            Ok(r) => r,
            Err(e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::InvalidProxyUrl)) => {
                return Err(AttemptError::Fatal(e.to_string()));
            }
            Err(e) => return Err(AttemptError::Transient(e.to_string())),
        };
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| AttemptError::Transient(e.to_string()))?;
        match status {
            200..=299 => {
                serde_json::from_str(&text).map_err(|e| AttemptError::Fatal(format!("response is not JSON: {e}")))
            }
            429 | 500..=599 => Err(AttemptError::Transient(format!("HTTP {status}: {}", truncate(&text)))),
            _ => Err(AttemptError::Fatal(format!("HTTP {status}: {}", truncate(&text)))),
        }
    }
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}

pub struct RemoteGenerator {
    client: Arc<RemoteClient>,
    url: String,
    template: RequestTemplate,
}

impl RemoteGenerator {
    pub fn new(client: Arc<RemoteClient>, url: String, template: RequestTemplate) -> Self {
        RemoteGenerator { client, url, template }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, GatewayError> {
        req.validate()?;
        let body = self.template.render(&[
            ("prompt", json!(req.prompt)),
            ("max_tokens", json!(req.max_tokens)),
            ("temperature", json!(req.temperature)),
            ("stop", json!(req.stop)),
        ])?;
        let resp = self.client.post_json(&self.url, &body)?;
        let text = self
            .template
            .extract(&resp)?
            .as_str()
            .ok_or_else(|| GatewayError::BadResponse("generation is not a string".into()))?;
        Ok(apply_stop(text.to_string(), &req.stop))
    }
}

pub struct RemoteEmbedder {
    client: Arc<RemoteClient>,
    url: String,
    template: RequestTemplate,
    dim: OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(client: Arc<RemoteClient>, url: String, template: RequestTemplate, dim: Option<usize>) -> Self {
        let cell = OnceLock::new();
        if let Some(d) = dim {
            let _ = cell.set(d);
        }
        RemoteEmbedder { client, url, template, dim: cell }
    }
}

impl Embedder for RemoteEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("no texts to embed".into()));
        }
        let body = self.template.render(&[("texts", json!(texts))])?;
        let resp = self.client.post_json(&self.url, &body)?;
        let rows = self
            .template
            .extract(&resp)?
            .as_array()
            .ok_or_else(|| GatewayError::BadResponse("embeddings are not an array".into()))?;
        if rows.len() != texts.len() {
            return Err(GatewayError::BadResponse(format!("{} embeddings for {} texts", rows.len(), texts.len())));
        }
        rows.iter()
            .map(|row| {
                let mut v: Vec<f32> = row
                    .as_array()
                    .ok_or_else(|| GatewayError::BadResponse("embedding is not an array".into()))?
                    .iter()
                    .map(|x| x.as_f64().map(|f| f as f32))
                    .collect::<Option<_>>()
                    .ok_or_else(|| GatewayError::BadResponse("embedding has non-numeric entries".into()))?;
                let expected = *self.dim.get_or_init(|| v.len());
                if v.len() != expected {
                    return Err(GatewayError::DimensionMismatch { expected, got: v.len() });
                }
                l2_normalize(&mut v)?;
                Ok(v)
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim.get().copied().unwrap_or(0)
    }
}

pub struct RemoteScorer {
    client: Arc<RemoteClient>,
    url: String,
    template: RequestTemplate,
}

impl RemoteScorer {
    pub fn new(client: Arc<RemoteClient>, url: String, template: RequestTemplate) -> Self {
        RemoteScorer { client, url, template }
    }
}

impl SequenceScorer for RemoteScorer {
    fn score(&self, source: &str, target: &str, prefix: &str) -> Result<SequenceScore, GatewayError> {
        if target.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("target must not be empty".into()));
        }
        let body =
            self.template.render(&[("source", json!(source)), ("target", json!(target)), ("prefix", json!(prefix))])?;
        let resp = self.client.post_json(&self.url, &body)?;
        let value = self
            .template
            .extract(&resp)?
            .as_f64()
            .ok_or_else(|| GatewayError::BadResponse("score is not a number".into()))?;
        SequenceScore::new(value)
    }
}

/// Placeholder for a capability whose endpoint is not configured; every
/// call fails with [`GatewayError::NotConfigured`].
#[derive(Debug, Clone, Copy)]
pub struct Unconfigured(pub &'static str);

impl Generator for Unconfigured {
    fn generate(&self, _req: &GenerationRequest) -> Result<String, GatewayError> {
        Err(GatewayError::NotConfigured(self.0))
    }
}

impl Embedder for Unconfigured {
    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Err(GatewayError::NotConfigured(self.0))
    }

    fn dim(&self) -> usize {
        0
    }
}

impl SequenceScorer for Unconfigured {
    fn score(&self, _s: &str, _t: &str, _p: &str) -> Result<SequenceScore, GatewayError> {
        Err(GatewayError::NotConfigured(self.0))
    }
}
