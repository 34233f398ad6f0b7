use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{f1, is_idk, normalized_precision, normalized_recall, EvalError, MetricConfig};
use crate::gateway::SequenceScorer;
use crate::raft::RaftExample;

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub example_id: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub example_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub idk: bool,
    /// The response was blank and scored 0 without consulting the scorer.
    pub empty_prediction: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n: usize,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub idk_count: usize,
    pub samples: Vec<SampleScore>,
}

impl ScoreReport {
    pub fn from_samples(samples: Vec<SampleScore>) -> Self {
        let n = samples.len();
        let mean = |f: fn(&SampleScore) -> f64| {
            if n == 0 {
                0.0
            } else {
                samples.iter().map(f).sum::<f64>() / n as f64
            }
        };
        ScoreReport {
            n,
            mean_precision: mean(|s| s.precision),
            mean_recall: mean(|s| s.recall),
            mean_f1: mean(|s| s.f1),
            idk_count: samples.iter().filter(|s| s.idk).count(),
            samples,
        }
    }

    pub fn to_table(&self) -> String {
        format!(
            "{:<10} {:>9} {:>9} {:>9} {:>6} {:>6}\n{:<10} {:>8.2}% {:>8.2}% {:>8.2}% {:>6} {:>6}\n",
            "",
            "Precision",
            "Recall",
            "F1",
            "#IDK",
            "N",
            "score",
            self.mean_precision * 100.0,
            self.mean_recall * 100.0,
            self.mean_f1 * 100.0,
            self.idk_count,
            self.n
        )
    }
}

/// Scores every example against its prediction. Each example needs exactly
/// one prediction; predictions for unknown ids are ignored.
pub fn score_predictions(
    examples: &[RaftExample],
    predictions: &[Prediction],
    scorer: &dyn SequenceScorer,
    cfg: &MetricConfig,
) -> Result<ScoreReport, EvalError> {
    cfg.validate()?;
    let mut by_id: HashMap<&str, &str> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if by_id.insert(&p.example_id, &p.response).is_some() {
            return Err(EvalError::DuplicatePrediction(p.example_id.clone()));
        }
    }
    let extra = predictions.len().saturating_sub(examples.len());
    if extra > 0 {
        tracing::warn!(extra, "predictions without a matching example are ignored");
    }
    let samples = examples
        .par_iter()
        .map(|ex| {
            let response = *by_id
                .get(ex.example_id.as_str())
                .ok_or_else(|| EvalError::MissingPrediction(ex.example_id.clone()))?;
            let precision = normalized_precision(&ex.answer, response, scorer, cfg)?;
            let recall = normalized_recall(&ex.answer, response, scorer, cfg)?;
            Ok(SampleScore {
                example_id: ex.example_id.clone(),
                precision,
                recall,
                f1: f1(precision, recall),
                idk: is_idk(response, cfg),
                empty_prediction: response.trim().is_empty(),
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(ScoreReport::from_samples(samples))
}

/// Reads a predictions JSONL file. Blank lines are skipped.
pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    let shown = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io { path: shown.clone(), source })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| EvalError::Io { path: shown.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line).map_err(|e| EvalError::Parse {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}
