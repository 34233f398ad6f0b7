use std::time::Duration;

use super::{RequestTemplate, RetryPolicy};
use crate::config::{ConfigError, KvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Remote,
    Stub,
}

/// Settings read from the `gateway.*` keys of the service config.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub generate_url: Option<String>,
    pub embed_url: Option<String>,
    pub score_url: Option<String>,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: Option<String>,
    pub max_inflight: usize,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// Expected embedding dimension. Stub mode uses it as its output size
    /// (64 when unset); remote mode checks responses against it.
    pub embed_dim: Option<usize>,
    pub generate_template: RequestTemplate,
    pub embed_template: RequestTemplate,
    pub score_template: RequestTemplate,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Stub,
            generate_url: None,
            embed_url: None,
            score_url: None,
            api_key_env: None,
            max_inflight: 4,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            embed_dim: None,
            generate_template: RequestTemplate::default_generate(),
            embed_template: RequestTemplate::default_embed(),
            score_template: RequestTemplate::default_score(),
        }
    }
}

impl GatewayConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let d = GatewayConfig::default();
        let mode = match kv.get("gateway.mode").unwrap_or("stub") {
            "stub" => GatewayMode::Stub,
            "remote" => GatewayMode::Remote,
            other => {
                return Err(ConfigError::InvalidValue { key: "gateway.mode".into(), value: other.into() });
            }
        };
        let template = |prefix: &str, fallback: RequestTemplate| RequestTemplate {
            body: kv.get(&format!("gateway.{prefix}_template")).map(String::from).unwrap_or(fallback.body),
            response_pointer: kv
                .get(&format!("gateway.{prefix}_response"))
                .map(String::from)
                .unwrap_or(fallback.response_pointer),
        };
        Ok(GatewayConfig {
            mode,
            generate_url: kv.get("gateway.generate_url").map(String::from),
            embed_url: kv.get("gateway.embed_url").map(String::from),
            score_url: kv.get("gateway.score_url").map(String::from),
            api_key_env: kv.get("gateway.api_key_env").map(String::from),
            max_inflight: kv.parsed_or("gateway.max_inflight", d.max_inflight)?,
            timeout: Duration::from_secs(kv.parsed_or("gateway.timeout_secs", d.timeout.as_secs())?),
            retry: RetryPolicy {
                max_attempts: kv.parsed_or("gateway.retry_attempts", d.retry.max_attempts)?,
                base_delay: Duration::from_millis(
                    kv.parsed_or("gateway.retry_base_ms", d.retry.base_delay.as_millis() as u64)?,
                ),
            },
            embed_dim: kv.parsed("gateway.embed_dim")?,
            generate_template: template("generate", d.generate_template),
            embed_template: template("embed", d.embed_template),
            score_template: template("score", d.score_template),
        })
    }
}
