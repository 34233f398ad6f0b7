use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{select_rafs_examples, Provenance, QaPair, SynthConfig, SynthError};
use crate::corpus::{filter_and_truncate, CorpusConfig, Document, HistoryEntry};
use crate::gateway::{GenerationRequest, Generator};
use crate::templates;

/// The few-shot block inserted into the synthesis prompt, one example
/// question per line.
pub fn render_few_shot_block(questions: &[String]) -> String {
    let examples = questions
        .iter()
        .map(|q| format!("- {}", q.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect::<Vec<_>>()
        .join("\n");
    templates::render(templates::FEW_SHOT_BLOCK, &[("examples", &examples)])
}

/// Assembles the synthesis prompt. Returns the prompt and whether a few-shot
/// block was included (only when RAFS is enabled, `rafs_k > 0` and at least
/// one example question is given; at most `rafs_k` are used).
pub fn render_synthesis_prompt(body: &str, rafs: &[String], cfg: &SynthConfig) -> (String, bool) {
    let used: &[String] = if cfg.use_rafs { &rafs[..rafs.len().min(cfg.rafs_k)] } else { &[] };
    let block = if used.is_empty() { String::new() } else { render_few_shot_block(used) };
    let prompt = templates::render(templates::SYNTHESIZE, &[("document", body), ("few_shot_block", &block)]);
    (prompt, !used.is_empty())
}

pub fn format_qa(question: &str, answer: &str, cfg: &SynthConfig) -> String {
    format!("{} {question}\n{} {answer}", cfg.question_delimiter, cfg.answer_delimiter)
}

/// Extracts `(question, answer)` from generator output: the answer follows
/// the last answer delimiter, the question sits between the last question
/// delimiter before it and the answer delimiter. Any preceding analysis is
/// ignored.
pub fn parse_qa(raw: &str, cfg: &SynthConfig) -> Result<(String, String), SynthError> {
    let parse_err = |reason: &str| SynthError::Parse { reason: reason.to_string(), raw: raw.to_string() };
    let a_pos = raw.rfind(&cfg.answer_delimiter).ok_or_else(|| parse_err("missing answer delimiter"))?;
    let q_pos = raw[..a_pos].rfind(&cfg.question_delimiter).ok_or_else(|| parse_err("missing question delimiter"))?;
    let question = raw[q_pos + cfg.question_delimiter.len()..a_pos].trim();
    let answer = raw[a_pos + cfg.answer_delimiter.len()..].trim();
    if question.is_empty() {
        return Err(parse_err("empty question"));
    }
    if answer.is_empty() {
        return Err(parse_err("empty answer"));
    }
    Ok((question.to_string(), answer.to_string()))
}

/// Generates one synthetic Q&A pair from a document.
pub fn generate_synthetic_qa(
    doc: &Document,
    rafs: &[String],
    cfg: &SynthConfig,
    generator: &dyn Generator,
) -> Result<QaPair, SynthError> {
    if doc.body.trim().is_empty() {
        return Err(SynthError::Invalid(format!("{}: empty document body", doc.doc_id)));
    }
    let (prompt, rafs_used) = render_synthesis_prompt(&doc.body, rafs, cfg);
    let raw = generator.generate(&GenerationRequest::new(prompt).with_max_tokens(2048))?;
    let (question, answer) = parse_qa(&raw, cfg)?;
    Ok(QaPair {
        qa_id: format!("syn-{}", doc.doc_id),
        question,
        answer,
        provenance: if rafs_used { Provenance::SyntheticRafs } else { Provenance::Synthetic },
        source_doc_id: Some(doc.doc_id.clone()),
        category: Some(doc.category),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthFailure {
    pub doc_id: String,
    pub error: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRun {
    /// Sorted by source document id.
    pub pairs: Vec<QaPair>,
    pub failures: Vec<SynthFailure>,
}

/// Filters and truncates `docs`, samples up to `sample` of them (seeded,
/// uniform), and generates one pair per document in parallel. With RAFS
/// enabled each document's few-shot questions come from `history`.
/// Generation failures are recorded and skipped.
pub fn run_synthesis(
    docs: Vec<Document>,
    history: &[HistoryEntry],
    cfg: &SynthConfig,
    corpus_cfg: &CorpusConfig,
    generator: &dyn Generator,
    sample: Option<usize>,
    seed: u64,
) -> SynthRun {
    let mut pool = filter_and_truncate(docs, corpus_cfg);
    pool.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(n) = sample.filter(|n| *n < pool.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = rand::seq::index::sample(&mut rng, pool.len(), n).into_vec();
        keep.sort_unstable();
        let mut slots: Vec<Option<Document>> = pool.into_iter().map(Some).collect();
        pool = keep.into_iter().filter_map(|i| slots[i].take()).collect();
    }

    let results: Vec<Result<QaPair, SynthFailure>> = pool
        .par_iter()
        .map(|doc| {
            let rafs = if cfg.use_rafs { select_rafs_examples(&doc.body, history, cfg.rafs_k) } else { Vec::new() };
            generate_synthetic_qa(doc, &rafs, cfg, generator).map_err(|e| {
                tracing::warn!(doc_id = %doc.doc_id, error = %e, "synthetic generation failed; skipping");
                SynthFailure {
                    doc_id: doc.doc_id.clone(),
                    error: e.to_string(),
                    raw: match e {
                        SynthError::Parse { raw, .. } => Some(raw),
                        _ => None,
                    },
                }
            })
        })
        .collect();

    let mut run = SynthRun::default();
    for r in results {
        match r {
            Ok(p) => run.pairs.push(p),
            Err(f) => run.failures.push(f),
        }
    }
    run
}
