//! Training-text production: Q2A post filtering and answer refinement,
//! RAFS few-shot selection and synthetic Q&A generation.

mod generate;
mod rafs;

use serde::{Deserialize, Serialize};

use crate::corpus::Category;
use crate::gateway::{GatewayError, GenerationRequest, Generator};
use crate::templates;

pub use generate::{
    format_qa, generate_synthetic_qa, parse_qa, render_synthesis_prompt, run_synthesis, SynthFailure, SynthRun,
};
pub use rafs::select_rafs_examples;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("empty refinement")]
    EmptyRefinement,
    #[error("could not parse generation: {reason}")]
    Parse { reason: String, raw: String },
    #[error("invalid QA pair: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Provenance {
    #[serde(rename = "Q2A_raw")]
    Q2aRaw,
    #[serde(rename = "Q2A_refined")]
    Q2aRefined,
    Synthetic,
    #[serde(rename = "Synthetic_RAFS")]
    SyntheticRafs,
}

impl Provenance {
    pub fn is_synthetic(self) -> bool {
        matches!(self, Provenance::Synthetic | Provenance::SyntheticRafs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub qa_id: String,
    pub question: String,
    pub answer: String,
    pub provenance: Provenance,
    pub source_doc_id: Option<String>,
    pub category: Option<Category>,
}

impl QaPair {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.question.trim().is_empty() || self.answer.trim().is_empty() {
            return Err(SynthError::Invalid(format!("{}: question and answer must be non-empty", self.qa_id)));
        }
        if self.provenance.is_synthetic() && self.source_doc_id.is_none() {
            return Err(SynthError::Invalid(format!("{}: synthetic pair without source document", self.qa_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub rafs_k: usize,
    pub use_rafs: bool,
    pub question_delimiter: String,
    pub answer_delimiter: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            rafs_k: 5,
            use_rafs: false,
            question_delimiter: "QUESTION:".into(),
            answer_delimiter: "ANSWER:".into(),
        }
    }
}

/// A raw forum post. `answer` is the marked best answer when one exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Q2aPost {
    #[serde(default)]
    pub post_id: Option<String>,
    pub question: String,
    #[serde(default)]
    pub answer: Option<String>,
    #[serde(default)]
    pub best_marked: bool,
}

/// True when the text is nothing but a single link.
fn is_link_only(text: &str) -> bool {
    let t = text.trim().trim_start_matches('<').trim_end_matches('>');
    if t.is_empty() || t.chars().any(char::is_whitespace) {
        return false;
    }
    // markdown [label](target)
    if let Some(inner) = t.strip_prefix('[') {
        if let Some((_, target)) = inner.split_once("](") {
            if target.ends_with(')') {
                return true;
            }
        }
    }
    let lower = t.to_ascii_lowercase();
    ["http://", "https://", "www.", "ftp://", "file://"].iter().any(|p| lower.starts_with(p))
}

/// Keeps posts that have a marked best answer which is more than a bare link.
pub fn filter_q2a_posts(posts: &[Q2aPost]) -> Vec<QaPair> {
    posts
        .iter()
        .enumerate()
        .filter_map(|(i, post)| {
            let answer = post.answer.as_deref().filter(|_| post.best_marked)?.trim();
            if answer.is_empty() || is_link_only(answer) || post.question.trim().is_empty() {
                return None;
            }
            Some(QaPair {
                qa_id: post.post_id.clone().unwrap_or_else(|| format!("q2a-{i:05}")),
                question: post.question.trim().to_string(),
                answer: answer.to_string(),
                provenance: Provenance::Q2aRaw,
                source_doc_id: None,
                category: None,
            })
        })
        .collect()
}

pub fn render_refine_prompt(qa: &QaPair) -> String {
    templates::render(templates::REFINE, &[("question", &qa.question), ("answer", &qa.answer)])
}

/// Rewrites a raw forum answer through the generator. The question is kept.
/// On failure the caller still holds the original pair.
pub fn refine_answer(qa: &QaPair, generator: &dyn Generator) -> Result<QaPair, SynthError> {
    if qa.provenance != Provenance::Q2aRaw {
        return Err(SynthError::Invalid(format!("{}: only raw Q2A answers are refined", qa.qa_id)));
    }
    let refined = generator.generate(&GenerationRequest::new(render_refine_prompt(qa)))?;
    let refined = refined.trim();
    if refined.is_empty() {
        return Err(SynthError::EmptyRefinement);
    }
    Ok(QaPair { answer: refined.to_string(), provenance: Provenance::Q2aRefined, ..qa.clone() })
}
