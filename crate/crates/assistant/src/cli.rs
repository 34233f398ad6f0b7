//! `ragraft` subcommands. Each one maps onto a library operation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ragraft_core::config::KvConfig;
use ragraft_core::corpus::{
    ingest, read_jsonl, write_jsonl, AccessGroups, CorpusConfig, CorpusStore, HistoryStore, PatternMap,
};
use ragraft_core::eval::{leakage_report, read_predictions, score_predictions, MetricConfig, ScoreReport};
use ragraft_core::gateway::{Gateway, GatewayConfig, LexicalOracleScorer, SequenceScorer};
use ragraft_core::raft::{build_raft_datasets, write_datasets, IdkPolicy, RaftBuildConfig, RaftExample};
use ragraft_core::retrieval::{AccessFilter, Retriever, SearchIndex};
use ragraft_core::service::{open_index, AssistantService, ServiceConfig, CONFIG_ENV};
use ragraft_core::synth::{filter_q2a_posts, refine_answer, run_synthesis, Q2aPost, QaPair, SynthConfig};

#[derive(Debug, Parser)]
#[command(name = "ragraft", version, about = "Access-controlled RAG assistant and RAFT dataset toolkit")]
pub struct Cli {
    /// Service config file (`key = value` lines).
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read documents, chunk them and build the search index.
    Ingest(IngestArgs),
    /// Generate one synthetic Q&A pair per sampled document.
    SynthGen(SynthGenArgs),
    /// Filter forum posts and rewrite their answers.
    RefineQ2a(RefineArgs),
    /// Assemble RAFT train/test datasets.
    BuildRaft(BuildRaftArgs),
    /// Score predictions and report leakage.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP query service.
    Serve(ServeArgs),
    /// Ask one question and print the answer with its sources.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Files or directories to read.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Output corpus directory (default: `corpus_dir` from the config).
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    /// `glob : group,group` lines assigning access groups by path.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    /// `glob : Category` lines assigning categories by path.
    #[arg(long)]
    pub categories: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 200)]
    pub overlap: usize,
    /// Documents shorter than this many characters are skipped.
    #[arg(long, default_value_t = 1000)]
    pub min_chars: usize,
    /// Skip building the search index.
    #[arg(long)]
    pub no_index: bool,
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, default_value = "synth/qa.jsonl")]
    pub out: PathBuf,
    /// Add few-shot examples retrieved from the query history.
    #[arg(long)]
    pub rafs: bool,
    /// Few-shot examples per document when `--rafs` is set.
    #[arg(long, default_value_t = 5)]
    pub rafs_k: usize,
    /// Sample this many documents instead of using all of them.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// JSONL posts: `{post_id?, question, answer?, best_marked}`.
    #[arg(long)]
    pub posts: PathBuf,
    #[arg(long, default_value = "q2a/qa.jsonl")]
    pub out: PathBuf,
    /// Keep the filtered answers as they are.
    #[arg(long)]
    pub no_refine: bool,
}

#[derive(Debug, Args)]
pub struct BuildRaftArgs {
    /// Synthetic Q&A pairs (JSONL).
    #[arg(long)]
    pub qa: PathBuf,
    /// Q2A pairs (JSONL).
    #[arg(long)]
    pub q2a: Option<PathBuf>,
    #[arg(long)]
    pub corpus_dir: Option<PathBuf>,
    #[arg(long, default_value = "datasets")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub idk_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Q2A pairs held out for test.
    #[arg(long, default_value_t = 100)]
    pub q2a_test: usize,
    /// Training examples copied into the missing-context test file.
    #[arg(long, default_value_t = 100)]
    pub mc_test: usize,
    /// Comma-separated groups whose documents may appear in contexts
    /// (default: every group in the corpus).
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score a predictions file against a dataset.
    Run(EvalRunArgs),
    /// Compare a full-context report with a missing-context report.
    Leakage(LeakageArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    Oracle,
    Remote,
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSONL `{example_id, response}`.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum, default_value_t = ScorerKind::Oracle)]
    pub scorer: ScorerKind,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LeakageArgs {
    /// Report for the full-context test set.
    #[arg(long)]
    pub full: PathBuf,
    /// Report for the missing-context test set.
    #[arg(long)]
    pub mc: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address (default: `server.bind` from the config).
    #[arg(long, conflicts_with = "port")]
    pub bind: Option<String>,
    /// Listen on 127.0.0.1 at this port.
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long, default_value = "")]
    pub user: String,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(required = true)]
    pub question: Vec<String>,
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on failure, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

struct Ctx {
    kv: KvConfig,
    base: PathBuf,
    path: Option<PathBuf>,
}

impl Ctx {
    fn load(path: Option<PathBuf>) -> Result<Self> {
        match path {
            Some(p) => {
                let kv = KvConfig::load(&p).with_context(|| format!("reading config {}", p.display()))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                Ok(Ctx { kv, base, path: Some(p) })
            }
            None => Ok(Ctx { kv: KvConfig::default(), base: PathBuf::new(), path: None }),
        }
    }

    fn gateway(&self) -> Result<Gateway> {
        Ok(Gateway::from_config(&GatewayConfig::from_kv(&self.kv)?))
    }

    /// Service settings, with `corpus_dir` taken from the flag when given.
    fn service_config(&self, corpus_dir: Option<&Path>) -> Result<ServiceConfig> {
        let mut kv = self.kv.clone();
        if let Some(dir) = corpus_dir {
            kv.set("corpus_dir", std::path::absolute(dir)?.to_string_lossy());
        }
        if kv.get("corpus_dir").is_none() {
            match &self.path {
                Some(p) => bail!("{} sets no corpus_dir; pass --corpus-dir", p.display()),
                None => bail!("pass --corpus-dir or a config file with corpus_dir (--config or {CONFIG_ENV})"),
            }
        }
        Ok(ServiceConfig::from_kv(&kv, &self.base)?)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let ctx = Ctx::load(cli.config)?;
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::SynthGen(a) => cmd_synth_gen(&ctx, a),
        Command::RefineQ2a(a) => cmd_refine(&ctx, a),
        Command::BuildRaft(a) => cmd_build_raft(&ctx, a),
        Command::Eval(EvalCommand::Run(a)) => cmd_eval_run(&ctx, a),
        Command::Eval(EvalCommand::Leakage(a)) => cmd_leakage(a),
        Command::Serve(a) => cmd_serve(&ctx, a),
        Command::Query(a) => cmd_query(&ctx, a),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let sc = ctx.service_config(a.corpus_dir.as_deref())?;
    let read = |p: &Option<PathBuf>| -> Result<Option<String>> {
        p.as_ref().map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))).transpose()
    };
    let groups = match read(&a.groups)? {
        Some(text) => PatternMap::parse_groups(&text)?,
        None => PatternMap::new(),
    };
    let categories = match read(&a.categories)? {
        Some(text) => PatternMap::parse_categories(&text)?,
        None => PatternMap::new(),
    };
    let cfg =
        CorpusConfig { chunk_size: a.chunk_size, overlap: a.overlap, min_doc_chars: a.min_chars, ..Default::default() };
    let store = CorpusStore::new(&sc.corpus_dir);
    let stats = ingest(&a.paths, &groups, &categories, &cfg, &store)?;
    if !a.no_index {
        let gateway = ctx.gateway()?;
        let index = SearchIndex::build(store.load_chunks()?, gateway.embedder.as_ref())?;
        index.save(&sc.index_dir)?;
    }
    print_json(&stats)
}

fn cmd_synth_gen(ctx: &Ctx, a: SynthGenArgs) -> Result<()> {
    let sc = ctx.service_config(a.corpus_dir.as_deref())?;
    let store = CorpusStore::new(&sc.corpus_dir);
    let docs = store.load_documents()?;
    if docs.is_empty() {
        bail!("no documents in {}; run ingest first", sc.corpus_dir.display());
    }
    let history = if a.rafs { HistoryStore::open(&sc.history_file)?.all() } else { Vec::new() };
    if a.rafs && history.is_empty() {
        tracing::warn!("--rafs given but the query history is empty; prompts get no examples");
    }
    let cfg = SynthConfig { use_rafs: a.rafs, rafs_k: a.rafs_k, ..Default::default() };
    let gateway = ctx.gateway()?;
    let run =
        run_synthesis(docs, &history, &cfg, &CorpusConfig::default(), gateway.generator.as_ref(), a.sample, a.seed);
    if let Some(parent) = a.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(&a.out, &run.pairs)?;
    if !run.failures.is_empty() {
        write_jsonl(&a.out.with_extension("failures.jsonl"), &run.failures)?;
    }
    eprintln!("{} pairs written to {}, {} failures", run.pairs.len(), a.out.display(), run.failures.len());
    if run.pairs.is_empty() {
        bail!("no pair could be generated");
    }
    Ok(())
}

fn cmd_refine(ctx: &Ctx, a: RefineArgs) -> Result<()> {
    let posts: Vec<Q2aPost> = read_jsonl(&a.posts)?;
    let kept = filter_q2a_posts(&posts);
    let gateway = ctx.gateway()?;
    let mut failed = 0;
    let pairs: Vec<QaPair> = if a.no_refine {
        kept
    } else {
        kept.into_iter()
            .map(|qa| match refine_answer(&qa, gateway.generator.as_ref()) {
                Ok(refined) => refined,
                Err(e) => {
                    tracing::warn!(qa_id = %qa.qa_id, error = %e, "refinement failed; keeping the original answer");
                    failed += 1;
                    qa
                }
            })
            .collect()
    };
    if let Some(parent) = a.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(&a.out, &pairs)?;
    eprintln!(
        "{} of {} posts kept, {} refinements failed, written to {}",
        pairs.len(),
        posts.len(),
        failed,
        a.out.display()
    );
    Ok(())
}

fn cmd_build_raft(ctx: &Ctx, a: BuildRaftArgs) -> Result<()> {
    let sc = ctx.service_config(a.corpus_dir.as_deref())?;
    let synthetic: Vec<QaPair> = read_jsonl(&a.qa)?;
    let q2a: Vec<QaPair> = match &a.q2a {
        Some(p) => read_jsonl(p)?,
        None => Vec::new(),
    };
    let gateway = ctx.gateway()?;
    let chunks = CorpusStore::new(&sc.corpus_dir).load_chunks()?;
    if chunks.is_empty() {
        bail!("no chunks in {}; run ingest first", sc.corpus_dir.display());
    }
    let groups: AccessGroups = match a.groups {
        Some(g) => g.into_iter().collect(),
        None => chunks.iter().flat_map(|c| c.access_groups.iter().cloned()).collect(),
    };
    let index = open_index(chunks, &sc.index_dir, gateway.embedder.as_ref())?;
    let retriever = Retriever::new(Arc::new(index), gateway.embedder.clone());
    let cfg = RaftBuildConfig {
        retrieval: sc.retrieval,
        prompt: sc.prompt,
        filter: AccessFilter::new(groups),
        test_fraction: a.test_fraction,
        q2a_test: a.q2a_test,
        missing_context_test: a.mc_test,
        idk: IdkPolicy { fraction: a.idk_fraction, seed: a.seed, ..Default::default() },
        seed: a.seed,
    };
    let data = build_raft_datasets(synthetic, q2a, &retriever, &cfg)?;
    write_datasets(&a.out, &data)?;
    print_json(&data.manifest.counts)
}

fn cmd_eval_run(ctx: &Ctx, a: EvalRunArgs) -> Result<()> {
    let examples: Vec<RaftExample> = read_jsonl(&a.dataset)?;
    let predictions = read_predictions(&a.predictions)?;
    let scorer: Arc<dyn SequenceScorer> = match a.scorer {
        ScorerKind::Oracle => Arc::new(LexicalOracleScorer),
        ScorerKind::Remote => ctx.gateway()?.scorer,
    };
    let report = score_predictions(&examples, &predictions, scorer.as_ref(), &MetricConfig::default())?;
    write_pretty(&a.out, &report)?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_leakage(a: LeakageArgs) -> Result<()> {
    let load = |p: &Path| -> Result<ScoreReport> {
        let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
    };
    let report = leakage_report(&load(&a.full)?, &load(&a.mc)?);
    if let Some(out) = &a.out {
        write_pretty(out, &report)?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn write_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))
}

fn cmd_serve(ctx: &Ctx, a: ServeArgs) -> Result<()> {
    let sc = ctx.service_config(None)?;
    let bind = match (a.bind, a.port) {
        (Some(b), _) => b,
        (None, Some(port)) => format!("127.0.0.1:{port}"),
        (None, None) => sc.bind.clone(),
    };
    let service = Arc::new(AssistantService::open(&sc)?);
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.with_context(|| format!("binding {bind}"))?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        crate::http::serve(listener, service, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(())
    })
}

fn cmd_query(ctx: &Ctx, a: QueryArgs) -> Result<()> {
    let sc = ctx.service_config(None)?;
    let service = AssistantService::open(&sc)?;
    let question = a.question.join(" ");
    let resp = service.handle_query(&a.user, &question, a.top_n)?;
    println!("{}\n", resp.answer);
    if resp.degraded {
        println!("(lexical-only retrieval: the embedding service was unavailable)\n");
    }
    println!("{:<4} {:<24} {:<18} {:<20} {:>10}  groups", "#", "chunk", "doc", "category", "score");
    for (i, p) in resp.provenance.iter().enumerate() {
        let groups = if p.access_groups.is_empty() {
            "public".to_string()
        } else {
            p.access_groups.iter().cloned().collect::<Vec<_>>().join(",")
        };
        println!(
            "{:<4} {:<24} {:<18} {:<20} {:>10.6}  {}",
            i + 1,
            p.chunk_id,
            p.doc_id,
            p.category.to_string(),
            p.fused_score,
            groups
        );
    }
    Ok(())
}
