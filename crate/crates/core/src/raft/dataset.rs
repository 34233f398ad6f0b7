use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    assign_splits, augment_with_idk, build_raft_example, make_missing_context, IdkPolicy, PromptConfig, RaftError,
    RaftExample, Split, SplitPlan,
};
use crate::corpus::{write_jsonl, Category};
use crate::retrieval::{AccessFilter, RetrievalConfig, Retriever};
use crate::synth::QaPair;
use crate::templates;

pub const TRAIN_FILE: &str = "raft_train.jsonl";
pub const TEST_FILE: &str = "raft_test.jsonl";
pub const TEST_MISSING_CONTEXT_FILE: &str = "raft_test_missing_context.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaftBuildConfig {
    pub retrieval: RetrievalConfig,
    pub prompt: PromptConfig,
    /// Groups whose documents may appear in training contexts.
    pub filter: AccessFilter,
    /// Share of synthetic source documents held out for test.
    pub test_fraction: f64,
    /// Q2A pairs held out for test (capped at the number available).
    pub q2a_test: usize,
    /// Synthetic training examples copied into the missing-context test file.
    pub missing_context_test: usize,
    pub idk: IdkPolicy,
    pub seed: u64,
}

impl Default for RaftBuildConfig {
    fn default() -> Self {
        RaftBuildConfig {
            retrieval: RetrievalConfig::default(),
            prompt: PromptConfig::default(),
            filter: AccessFilter::public(),
            test_fraction: 0.1,
            q2a_test: 100,
            missing_context_test: 100,
            idk: IdkPolicy::default(),
            seed: 0,
        }
    }
}

/// Fine-tuning settings handed to the external trainer with each dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyperparameters {
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub epochs: u32,
    pub lr: f64,
    pub lr_scheduler: String,
    pub batch: u32,
    pub grad_accum: u32,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub max_seq: u32,
    pub quantization_bits: u32,
    pub gradient_checkpointing: bool,
}

impl Default for TrainingHyperparameters {
    fn default() -> Self {
        TrainingHyperparameters {
            lora_rank: 128,
            lora_alpha: 32,
            lora_dropout: 0.0,
            epochs: 5,
            lr: 2e-5,
            lr_scheduler: "cosine".into(),
            batch: 8,
            grad_accum: 2,
            warmup_ratio: 0.1,
            weight_decay: 0.0,
            max_seq: 8192,
            quantization_bits: 4,
            gradient_checkpointing: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub train: usize,
    pub test: usize,
    pub test_missing_context: usize,
    pub q2a_train: usize,
    pub q2a_test: usize,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub idk_appended: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub template_version: String,
    pub seed: u64,
    pub retrieval: RetrievalConfig,
    pub max_prompt_chars: usize,
    pub access_groups: Vec<String>,
    pub test_fraction: f64,
    pub idk_policy: IdkPolicy,
    pub synthetic_split: SplitPlan<Category>,
    pub counts: DatasetCounts,
    pub training: TrainingHyperparameters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaftDatasets {
    pub train: Vec<RaftExample>,
    pub test: Vec<RaftExample>,
    pub test_missing_context: Vec<RaftExample>,
    pub manifest: DatasetManifest,
}

fn build_all(
    pairs: &[QaPair],
    split: Split,
    retriever: &Retriever,
    cfg: &RaftBuildConfig,
) -> Result<Vec<RaftExample>, RaftError> {
    pairs
        .par_iter()
        .map(|qa| {
            build_raft_example(qa, retriever, &cfg.filter, &cfg.retrieval, &cfg.prompt)
                .map(|ex| RaftExample { split, ..ex })
        })
        .collect()
}

/// Turns refined Q2A pairs and synthetic pairs into the three dataset files.
///
/// - Synthetic pairs are split per category by source document.
/// - `q2a_test` Q2A pairs, chosen with the seed, go to test; the rest train.
/// - The missing-context file holds `missing_context_test` seeded picks from
///   the synthetic training examples with their source chunks removed. They
///   keep `split = train` since they are derived from training questions.
/// - IDK copies of synthetic training examples are appended to train.
///
/// Output order is fixed: Q2A before synthetic, each sorted by id, IDK copies
/// last. Equal inputs and config give identical datasets.
pub fn build_raft_datasets(
    synthetic: Vec<QaPair>,
    q2a: Vec<QaPair>,
    retriever: &Retriever,
    cfg: &RaftBuildConfig,
) -> Result<RaftDatasets, RaftError> {
    cfg.retrieval.validate()?;
    cfg.idk.validate()?;

    let (syn_train, syn_test, plan) = if synthetic.is_empty() {
        (Vec::new(), Vec::new(), SplitPlan { categories: Default::default() })
    } else {
        assign_splits(synthetic, cfg.test_fraction, cfg.seed)?
    };

    let mut q2a = q2a;
    q2a.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    let n_q2a_test = cfg.q2a_test.min(q2a.len());
    if n_q2a_test == q2a.len() && !q2a.is_empty() {
        tracing::warn!(n = q2a.len(), "every Q2A pair went to test; none are left for training");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut test_idx = rand::seq::index::sample(&mut rng, q2a.len(), n_q2a_test).into_vec();
    test_idx.sort_unstable();
    let (mut q2a_train, mut q2a_test) = (Vec::new(), Vec::new());
    for (i, qa) in q2a.into_iter().enumerate() {
        if test_idx.binary_search(&i).is_ok() {
            q2a_test.push(qa)
        } else {
            q2a_train.push(qa)
        }
    }

    let q2a_train = build_all(&q2a_train, Split::Train, retriever, cfg)?;
    let q2a_test = build_all(&q2a_test, Split::Test, retriever, cfg)?;
    let syn_train = build_all(&syn_train, Split::Train, retriever, cfg)?;
    let syn_test = build_all(&syn_test, Split::Test, retriever, cfg)?;

    let n_mc = cfg.missing_context_test.min(syn_train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    let mut mc_idx = rand::seq::index::sample(&mut rng, syn_train.len(), n_mc).into_vec();
    mc_idx.sort_unstable();
    let test_missing_context = mc_idx
        .into_iter()
        .map(|i| make_missing_context(&syn_train[i], &retriever.index, &cfg.prompt))
        .collect::<Result<Vec<_>, _>>()?;

    let n_syn_train = syn_train.len();
    let syn_train = augment_with_idk(syn_train, &cfg.idk, &retriever.index, &cfg.prompt)?;
    let idk_appended = syn_train.len() - n_syn_train;

    let counts = DatasetCounts {
        train: q2a_train.len() + syn_train.len(),
        test: q2a_test.len() + syn_test.len(),
        test_missing_context: test_missing_context.len(),
        q2a_train: q2a_train.len(),
        q2a_test: q2a_test.len(),
        synthetic_train: n_syn_train,
        synthetic_test: syn_test.len(),
        idk_appended,
    };
    let manifest = DatasetManifest {
        template_version: templates::template_version(),
        seed: cfg.seed,
        retrieval: cfg.retrieval,
        max_prompt_chars: cfg.prompt.max_prompt_chars,
        access_groups: cfg.filter.user_groups.iter().cloned().collect(),
        test_fraction: cfg.test_fraction,
        idk_policy: cfg.idk.clone(),
        synthetic_split: plan,
        counts,
        training: TrainingHyperparameters::default(),
    };

    let mut train = q2a_train;
    // IDK copies sit at the end of syn_train already.
    train.extend(syn_train);
    let mut test = q2a_test;
    test.extend(syn_test);
    Ok(RaftDatasets { train, test, test_missing_context, manifest })
}

/// Writes the three JSONL files and `manifest.json` into `dir`.
pub fn write_datasets(dir: &Path, data: &RaftDatasets) -> Result<(), RaftError> {
    let io = |source| RaftError::Io { path: dir.display().to_string(), source };
    std::fs::create_dir_all(dir).map_err(io)?;
    write_jsonl(&dir.join(TRAIN_FILE), &data.train)?;
    write_jsonl(&dir.join(TEST_FILE), &data.test)?;
    write_jsonl(&dir.join(TEST_MISSING_CONTEXT_FILE), &data.test_missing_context)?;
    let mut json = serde_json::to_string_pretty(&data.manifest).expect("manifest serializes");
    json.push('\n');
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, json).map_err(|source| RaftError::Io { path: path.display().to_string(), source })
}
