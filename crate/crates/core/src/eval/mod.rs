//! Normalized likelihood precision/recall/F1, IDK counting and the
//! missing-context leakage report.
//!
//! For a reference `r`, a prediction `p` and each rephrase prompt `z`:
//!
//! ```text
//! precision_z = s(r -> r | z) / s(r -> p | z)
//! recall_z    = s(r -> r | z) / s(p -> r | z)
//! ```
//!
//! where `s(x -> y | z)` is the scorer's log-likelihood of `z + y` given `x`.
//! Per-prompt ratios are averaged, then clamped to `[0, 1]`. F1 is the
//! arithmetic mean of precision and recall.

mod leakage;
mod report;

use serde::{Deserialize, Serialize};

use crate::gateway::{GatewayError, SequenceScorer};

pub use leakage::{leakage_report, LeakageReport};
pub use report::{read_predictions, score_predictions, Prediction, SampleScore, ScoreReport};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid metric config: {0}")]
    InvalidConfig(String),
    #[error("reference text is empty")]
    EmptyReference,
    #[error("no prediction for example {0}")]
    MissingPrediction(String),
    #[error("duplicate prediction for example {0}")]
    DuplicatePrediction(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub rephrase_prompts: Vec<String>,
    pub clamp: bool,
    /// Lowercase substrings; a response containing any of them is an IDK.
    pub idk_patterns: Vec<String>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            rephrase_prompts: ["That is to say, ", "In other words, ", "To rephrase it, ", "i.e., "]
                .map(String::from)
                .to_vec(),
            clamp: true,
            idk_patterns: ["i don't know", "i do not know", "not enough information", "cannot answer"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.rephrase_prompts.is_empty() {
            return Err(EvalError::InvalidConfig("rephrase_prompts must not be empty".into()));
        }
        Ok(())
    }
}

/// `num / den` for two log-likelihoods. Both are `<= 0`; a zero denominator
/// means the second sequence is certain, which counts as a perfect ratio.
fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

fn averaged(
    reference: &str,
    pred: &str,
    cfg: &MetricConfig,
    per_prompt: impl Fn(&str) -> Result<f64, EvalError>,
) -> Result<f64, EvalError> {
    cfg.validate()?;
    if reference.trim().is_empty() {
        return Err(EvalError::EmptyReference);
    }
    if pred.trim().is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for z in &cfg.rephrase_prompts {
        sum += per_prompt(z)?;
    }
    let mean = sum / cfg.rephrase_prompts.len() as f64;
    Ok(if cfg.clamp { mean.clamp(0.0, 1.0) } else { mean })
}

/// Mean over prompts of `s(ref -> ref) / s(ref -> pred)`. An empty prediction
/// scores 0.
pub fn normalized_precision(
    reference: &str,
    pred: &str,
    scorer: &dyn SequenceScorer,
    cfg: &MetricConfig,
) -> Result<f64, EvalError> {
    averaged(reference, pred, cfg, |z| {
        let own = scorer.score(reference, reference, z)?.value();
        let cross = scorer.score(reference, pred, z)?.value();
        Ok(ratio(own, cross))
    })
}

/// Mean over prompts of `s(ref -> ref) / s(pred -> ref)`. An empty prediction
/// scores 0.
pub fn normalized_recall(
    reference: &str,
    pred: &str,
    scorer: &dyn SequenceScorer,
    cfg: &MetricConfig,
) -> Result<f64, EvalError> {
    averaged(reference, pred, cfg, |z| {
        let own = scorer.score(reference, reference, z)?.value();
        let cross = scorer.score(pred, reference, z)?.value();
        Ok(ratio(own, cross))
    })
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    (precision + recall) / 2.0
}

pub fn is_idk(response: &str, cfg: &MetricConfig) -> bool {
    let lower = response.to_lowercase();
    cfg.idk_patterns.iter().any(|p| lower.contains(&p.to_lowercase()))
}

pub fn count_idk<S: AsRef<str>>(responses: &[S], cfg: &MetricConfig) -> usize {
    responses.iter().filter(|r| is_idk(r.as_ref(), cfg)).count()
}
