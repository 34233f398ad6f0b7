use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{render_raft_prompt, IdkPolicy, PromptConfig, RaftError, RaftExample, Split};
use crate::corpus::Chunk;
use crate::retrieval::{AccessFilter, RetrievalConfig, Retriever, SearchIndex};
use crate::synth::{Provenance, QaPair};

/// Retrieves context for `qa.question` under `filter` and renders the RAFT
/// prompt. The example starts in the train split.
pub fn build_raft_example(
    qa: &QaPair,
    retriever: &Retriever,
    filter: &AccessFilter,
    retrieval: &RetrievalConfig,
    prompt: &PromptConfig,
) -> Result<RaftExample, RaftError> {
    let result = retriever.search(&qa.question, filter, retrieval)?;
    let chunks = lookup(&retriever.index, result.hits.iter().map(|h| h.chunk_id.as_str()))?;
    let (text, kept) = render_raft_prompt(&qa.question, &chunks, prompt.max_prompt_chars);
    Ok(RaftExample {
        example_id: qa.qa_id.clone(),
        question: qa.question.clone(),
        prompt: text,
        answer: qa.answer.clone(),
        chunk_ids: chunks[..kept].iter().map(|c| c.chunk_id.clone()).collect(),
        source_doc_id: qa.source_doc_id.clone(),
        category: qa.category,
        split: Split::Train,
        missing_context: false,
        rafs_used: qa.provenance == Provenance::SyntheticRafs,
    })
}

fn lookup<'a>(index: &'a SearchIndex, ids: impl Iterator<Item = &'a str>) -> Result<Vec<&'a Chunk>, RaftError> {
    ids.map(|id| index.chunk(id).ok_or_else(|| RaftError::UnknownChunk(id.to_string()))).collect()
}

/// The same example with every chunk of its source document removed from
/// the context. Remaining chunks keep their order and the prompt is
/// re-rendered; the answer is unchanged.
pub fn make_missing_context(
    example: &RaftExample,
    index: &SearchIndex,
    prompt: &PromptConfig,
) -> Result<RaftExample, RaftError> {
    let source = example.source_doc_id.as_deref().ok_or_else(|| RaftError::NoSource(example.example_id.clone()))?;
    let mut chunks = lookup(index, example.chunk_ids.iter().map(String::as_str))?;
    chunks.retain(|c| c.doc_id != source);
    let (text, kept) = render_raft_prompt(&example.question, &chunks, prompt.max_prompt_chars);
    Ok(RaftExample {
        prompt: text,
        chunk_ids: chunks[..kept].iter().map(|c| c.chunk_id.clone()).collect(),
        missing_context: true,
        ..example.clone()
    })
}

/// `floor(fraction * n)`, tolerant of products like `0.29 * 100` landing just
/// under an integer.
pub fn idk_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

/// Appends IDK copies of `idk_count(policy.fraction, train.len())` seeded
/// picks from `train`. Each copy has its source chunks removed, answers
/// `policy.idk_label` and gets the id suffix `-idk`. Only training examples
/// with a source document can be picked; if too few exist, all of them are
/// used.
pub fn augment_with_idk(
    train: Vec<RaftExample>,
    policy: &IdkPolicy,
    index: &SearchIndex,
    prompt: &PromptConfig,
) -> Result<Vec<RaftExample>, RaftError> {
    policy.validate()?;
    let eligible: Vec<usize> =
        (0..train.len()).filter(|&i| train[i].split == Split::Train && train[i].source_doc_id.is_some()).collect();
    let wanted = idk_count(policy.fraction, train.len());
    if wanted > eligible.len() {
        tracing::warn!(wanted, eligible = eligible.len(), "not enough examples with a source document for IDK copies");
    }
    let n = wanted.min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut picks: Vec<usize> =
        rand::seq::index::sample(&mut rng, eligible.len(), n).into_iter().map(|i| eligible[i]).collect();
    picks.sort_unstable();

    let mut copies = Vec::with_capacity(n);
    for i in picks {
        let mut copy = make_missing_context(&train[i], index, prompt)?;
        copy.example_id = format!("{}-idk", copy.example_id);
        copy.answer = policy.idk_label.clone();
        copies.push(copy);
    }
    let mut out = train;
    out.extend(copies);
    Ok(out)
}
