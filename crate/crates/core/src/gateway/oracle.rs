use std::collections::{HashMap, HashSet};

use super::{GatewayError, SequenceScore, SequenceScorer};
use crate::tokenize::tokenize;

/// Deterministic lexical stand-in for a seq2seq likelihood scorer.
///
/// Each token of `prefix + target` is scored under an add-one smoothed
/// unigram model of `source`:
/// `P(t) = (count(t in source) + 1) / (len(source) + V)` where `V` is the
/// vocabulary size of source and target tokens together. The score is the
/// mean of `ln P(t)` over target tokens, so it is always finite and `<= 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalOracleScorer;

impl SequenceScorer for LexicalOracleScorer {
    fn score(&self, source: &str, target: &str, prefix: &str) -> Result<SequenceScore, GatewayError> {
        if target.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("target must not be empty".into()));
        }
        let source_tokens = tokenize(source);
        let target_tokens = tokenize(&format!("{prefix}{target}"));
        if target_tokens.is_empty() {
            return Err(GatewayError::InvalidRequest("target has no scorable tokens".into()));
        }

        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &source_tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let vocab: HashSet<&str> = source_tokens.iter().chain(&target_tokens).map(String::as_str).collect();
        let denom = (source_tokens.len() + vocab.len()) as f64;

        let total: f64 = target_tokens
            .iter()
            .map(|t| ((counts.get(t.as_str()).copied().unwrap_or(0) + 1) as f64 / denom).ln())
            .sum();
        SequenceScore::new(total / target_tokens.len() as f64)
    }
}
