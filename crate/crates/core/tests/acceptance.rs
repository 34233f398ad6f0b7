//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Run with `cargo test -p ragraft-core --test acceptance`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::process::ExitCode;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use ragraft_core::corpus::{
    chunk_document, ingest, AccessGroups, Category, Chunk, CorpusConfig, CorpusStore, Document, HistoryEntry,
    HistoryStore, PatternMap,
};
use ragraft_core::eval::{
    f1, leakage_report, normalized_precision, normalized_recall, score_predictions, MetricConfig, Prediction,
};
use ragraft_core::gateway::{
    Embedder, FailingEmbedder, GatewayError, GenerationRequest, Generator, HashEmbedder, LexicalOracleScorer,
    StubGenerator,
};
use ragraft_core::raft::{
    apportion_split, augment_with_idk, build_raft_datasets, build_raft_example, make_missing_context, write_datasets,
    IdkPolicy, PromptConfig, RaftBuildConfig, RaftExample, Split, DEFAULT_IDK_LABEL,
};
use ragraft_core::retrieval::{rrf_fuse, AccessFilter, Bm25Params, RetrievalConfig, Retriever, SearchIndex};
use ragraft_core::service::{AssistantService, IndexSnapshot, UserDirectory};
use ragraft_core::stubs;
use ragraft_core::synth::{run_synthesis, Provenance, QaPair, SynthConfig};

// Tolerances and budgets.
const F1_TOL_PP: f64 = 0.005;
// 42.275 has no exact binary representation; this absorbs the representation error only.
const FP_SLACK: f64 = 1e-9;
const RRF_TOL: f64 = 1e-12;
const BM25_HAND_TOL: f64 = 1e-4;
const RECALL_HAND_TOL: f64 = 1e-3;

const TABLE1_BUDGET: Duration = Duration::from_secs(1);
const CHUNKER_BUDGET: Duration = Duration::from_secs(30);
const RED_TEAM_BUDGET: Duration = Duration::from_secs(120);
const E2E_BUDGET: Duration = Duration::from_secs(60);

const CHUNKER_DOCS: usize = 10_000;
const CHUNKER_MAX_LEN: usize = 50_000;
const RETRIEVAL_CORPORA: usize = 1_000;
const RETRIEVAL_MAX_CHUNKS: usize = 200;
const RED_TEAM_CORPORA: usize = 500;
const RED_TEAM_QUERIES_PER_CORPUS: usize = 20;
const MC_RUNS: usize = 200;
const METRIC_PAIRS: usize = 10_000;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "table1_split_reproduction", budget: Some(TABLE1_BUDGET), run: table1_split },
        Criterion { name: "table2_f1_consistency", budget: None, run: table2_f1 },
        Criterion { name: "chunker_property_suite", budget: Some(CHUNKER_BUDGET), run: chunker_suite },
        Criterion { name: "retrieval_oracle_equivalence", budget: None, run: retrieval_equivalence },
        Criterion { name: "zero_leak_red_team", budget: Some(RED_TEAM_BUDGET), run: red_team },
        Criterion { name: "missing_context_purity", budget: None, run: missing_context_purity },
        Criterion { name: "metric_identities", budget: None, run: metric_identities },
        Criterion { name: "end_to_end_pipeline", budget: Some(E2E_BUDGET), run: end_to_end },
    ];

    println!("acceptance: {} criteria", criteria.len() + 1);
    let mut failures = 0;
    for c in &criteria {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = started.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => {
                Err(format!("over budget: {:.2}s > {:.0}s", elapsed.as_secs_f64(), b.as_secs_f64()))
            }
            (o, _) => o,
        };
        let budget = c.budget.map(|b| format!(", budget {:.0}s", b.as_secs_f64())).unwrap_or_default();
        match outcome {
            Ok(detail) => println!("PASS {:<30} {detail} ({:.2}s{budget})", c.name, elapsed.as_secs_f64()),
            Err(detail) => {
                failures += 1;
                println!("FAIL {:<30} {detail} ({:.2}s{budget})", c.name, elapsed.as_secs_f64());
            }
        }
    }

    // Model-quality tables need the proprietary corpus, GPU fine-tuning and
    // pretrained scorers; the suites above cover the method definitions.
    let substitutes = if failures == 0 { "PASS" } else { "FAIL" };
    println!(
        "{substitutes} {:<30} absolute model-quality numbers are not reproduced offline; substitute suites {}",
        "not_reproducible_tables",
        if failures == 0 { "all pass" } else { "have failures" }
    );
    if failures > 0 {
        failures += 1;
    }

    println!("acceptance: {} passed, {} failed", criteria.len() + 1 - failures, failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

// ---------------------------------------------------------------------------

fn table1_split() -> Outcome {
    let counts: BTreeMap<Category, usize> = [
        (Category::ParameterReference, 2),
        (Category::Timing, 27),
        (Category::DevOps, 263),
        (Category::DesignGuide, 328),
        (Category::CommandReference, 380),
    ]
    .into_iter()
    .collect();
    let plan = apportion_split(&counts, 0.1, 1000).map_err(|e| e.to_string())?;
    let test: Vec<usize> = counts.keys().map(|k| plan.categories[k].test).collect();
    let train: Vec<usize> = counts.keys().map(|k| plan.categories[k].train).collect();
    ensure(test == [1, 3, 26, 33, 37], || format!("test counts {test:?}"))?;
    ensure(train == [1, 24, 237, 295, 343], || format!("train counts {train:?}"))?;
    ensure(plan.total_test() == 100 && plan.total_train() == 900, || "totals".into())?;
    Ok(format!("test {test:?}, train {train:?}"))
}

fn table2_f1() -> Outcome {
    let got = f1(0.4105, 0.4350);
    ensure((got - 0.42275).abs() < 1e-12, || format!("f1 = {got}"))?;
    let pp = got * 100.0;
    ensure((pp - 42.28).abs() <= F1_TOL_PP + FP_SLACK, || format!("{pp:.4}% vs 42.28%"))?;
    Ok(format!("f1 = {got:.5} ({pp:.3}% vs reported 42.28%, tol {F1_TOL_PP} pp)"))
}

// ---------------------------------------------------------------------------

fn chunker_suite() -> Outcome {
    let cfg = CorpusConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Mixed-width characters so byte and char offsets differ.
    let alphabet: Vec<char> = "abcdefghij klmnop\nqrstuvwxyz.,éüñ中文字€😀".chars().collect();
    let pool: String = (0..CHUNKER_MAX_LEN * 2).map(|_| *alphabet.choose(&mut rng).unwrap()).collect();
    let offsets: Vec<usize> = pool.char_indices().map(|(b, _)| b).chain([pool.len()]).collect();

    let mut total_chunks = 0usize;
    for n in 0..CHUNKER_DOCS {
        let len = rng.gen_range(1..=CHUNKER_MAX_LEN);
        let from = rng.gen_range(0..=CHUNKER_MAX_LEN);
        let body = &pool[offsets[from]..offsets[from + len]];
        let at = |c: usize| offsets[from + c] - offsets[from];
        let doc = Document {
            doc_id: format!("doc{n}"),
            title: String::new(),
            body: body.to_string(),
            category: Category::Other,
            access_groups: AccessGroups::new(),
            source_path: String::new(),
        };
        let chunks = chunk_document(&doc, &cfg).map_err(|e| format!("len {len}: {e}"))?;

        let expected = if len <= 2000 { 1 } else { (len - 200).div_ceil(1800) };
        ensure(chunks.len() == expected, || format!("len {len}: {} chunks, expected {expected}", chunks.len()))?;
        ensure(chunks[0].start == 0, || format!("len {len}: first chunk starts at {}", chunks[0].start))?;
        ensure(chunks.last().unwrap().end == len, || format!("len {len}: coverage stops short"))?;
        for (i, c) in chunks.iter().enumerate() {
            ensure(c.seq == i && c.start == i * 1800, || format!("len {len}: chunk {i} starts at {}", c.start))?;
            ensure(c.end == (c.start + 2000).min(len), || format!("len {len}: chunk {i} ends at {}", c.end))?;
            ensure(c.text == body[at(c.start)..at(c.end)], || format!("len {len}: chunk {i} text mismatch"))?;
            if let Some(next) = chunks.get(i + 1) {
                ensure(c.end - next.start == 200, || {
                    format!("len {len}: overlap {} after chunk {i}", c.end - next.start)
                })?;
                let tail = &c.text[at(next.start) - at(c.start)..];
                let head = &next.text[..at(c.end) - at(next.start)];
                ensure(tail == head, || format!("len {len}: overlap text differs after chunk {i}"))?;
            }
        }
        total_chunks += chunks.len();
    }
    Ok(format!("{CHUNKER_DOCS} docs, {total_chunks} chunks, 0 failures"))
}

// ---------------------------------------------------------------------------

/// Returns the same vector for every text.
struct FixedEmbedder(Vec<f32>);

impl Embedder for FixedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Ok(texts.iter().map(|_| self.0.clone()).collect())
    }

    fn dim(&self) -> usize {
        self.0.len()
    }
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return v.iter().map(|x| (f64::from(*x) / norm) as f32).collect();
        }
    }
}

fn ref_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn allowed(groups: &AccessGroups, user: &AccessGroups) -> bool {
    groups.is_empty() || groups.iter().any(|g| user.contains(g))
}

fn sort_ranked(v: &mut [(String, f64)]) {
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
}

struct RefHit {
    id: String,
    score: f64,
    lex: Option<usize>,
    sem: Option<usize>,
}

/// Brute force: filter, score every authorized chunk both ways, sort, fuse.
fn reference_search(
    chunks: &[Chunk],
    rows: &[Vec<f32>],
    query: &str,
    user: &AccessGroups,
    query_vec: Option<&[f32]>,
    cfg: &RetrievalConfig,
) -> (Vec<(String, f64)>, Vec<RefHit>) {
    if query.trim().is_empty() {
        return (Vec::new(), Vec::new());
    }
    let auth: Vec<usize> = (0..chunks.len()).filter(|&i| allowed(&chunks[i].access_groups, user)).collect();
    if auth.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let toks: HashMap<usize, Vec<String>> = auth.iter().map(|&i| (i, ref_tokens(&chunks[i].text))).collect();
    let n = auth.len() as f64;
    let avgdl = auth.iter().map(|i| toks[i].len()).sum::<usize>() as f64 / n;
    let terms: BTreeSet<String> = ref_tokens(query).into_iter().collect();
    let (k1, b) = (cfg.bm25_k1, cfg.bm25_b);

    let mut lexical: Vec<(String, f64)> = Vec::new();
    for &i in &auth {
        let mut score = 0.0;
        let mut matched = false;
        for t in &terms {
            let tf = toks[&i].iter().filter(|x| *x == t).count();
            if tf == 0 {
                continue;
            }
            let df = auth.iter().filter(|j| toks[j].contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = tf as f64;
            let norm = 1.0 - b + b * toks[&i].len() as f64 / avgdl;
            score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            matched = true;
        }
        if matched {
            lexical.push((chunks[i].chunk_id.clone(), score));
        }
    }
    sort_ranked(&mut lexical);
    lexical.truncate(cfg.candidate_depth);

    let mut semantic: Vec<(String, f64)> = Vec::new();
    if let Some(q) = query_vec {
        for &i in &auth {
            let mut dot = 0.0f64;
            for (x, y) in q.iter().zip(&rows[i]) {
                dot += f64::from(*x) * f64::from(*y);
            }
            semantic.push((chunks[i].chunk_id.clone(), dot));
        }
        sort_ranked(&mut semantic);
        semantic.truncate(cfg.candidate_depth);
    }

    let mut ids: BTreeSet<String> = lexical.iter().map(|x| x.0.clone()).collect();
    ids.extend(semantic.iter().map(|x| x.0.clone()));
    let rank_in = |list: &[(String, f64)], id: &str| list.iter().position(|x| x.0 == id).map(|p| p + 1);
    let mut fused: Vec<RefHit> = ids
        .into_iter()
        .map(|id| {
            let lex = rank_in(&lexical, &id);
            let sem = rank_in(&semantic, &id);
            let score =
                lex.map_or(0.0, |r| 1.0 / (cfg.rrf_k + r as f64)) + sem.map_or(0.0, |r| 1.0 / (cfg.rrf_k + r as f64));
            RefHit { id, score, lex, sem }
        })
        .collect();
    fused.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then_with(|| a.id.cmp(&b.id)));
    fused.truncate(cfg.top_n);
    (lexical, fused)
}

const GROUPS: [&str; 4] = ["eng", "timing", "secret", "hr"];

fn random_groups(rng: &mut ChaCha8Rng, p_public: f64) -> AccessGroups {
    if rng.gen_bool(p_public) {
        return AccessGroups::new();
    }
    let k = rng.gen_range(1..=2);
    GROUPS.choose_multiple(rng, k).map(|g| g.to_string()).collect()
}

fn random_words(rng: &mut ChaCha8Rng, vocab: &[String], n: usize) -> String {
    (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
}

fn retrieval_equivalence() -> Outcome {
    let (hand_bm25, hand_rrf) = hand_cases()?;

    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let vocab: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
    let dim = 8;
    let mut compared = 0usize;
    let mut max_err = 0.0f64;
    for corpus in 0..RETRIEVAL_CORPORA {
        let n = rng.gen_range(1..=RETRIEVAL_MAX_CHUNKS);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let chunks: Vec<Chunk> = (0..n)
            .map(|i| {
                let words = rng.gen_range(0..25);
                let text = format!("{}.", random_words(&mut rng, &vocab, words));
                Chunk {
                    chunk_id: format!("c{:03}", perm[i]),
                    doc_id: format!("d{}", perm[i] / 3),
                    seq: 0,
                    start: 0,
                    end: text.chars().count(),
                    text,
                    category: Category::Other,
                    access_groups: random_groups(&mut rng, 0.4),
                }
            })
            .collect();
        let rows: Vec<Vec<f32>> = (0..n).map(|_| unit_vector(&mut rng, dim)).collect();
        let index = SearchIndex::from_embeddings(chunks.clone(), rows.clone()).map_err(|e| e.to_string())?;

        for _ in 0..3 {
            let user: AccessGroups = GROUPS.iter().filter(|_| rng.gen_bool(0.4)).map(|g| g.to_string()).collect();
            let query = match rng.gen_range(0..20) {
                0 => "  ".to_string(),
                1 => "zzz unknownterm".to_string(),
                _ => {
                    let k = rng.gen_range(1..=5);
                    random_words(&mut rng, &vocab, k)
                }
            };
            let top_n = rng.gen_range(1..=20);
            let cfg = RetrievalConfig { top_n, candidate_depth: top_n + rng.gen_range(0..=100), ..Default::default() };
            let qvec = unit_vector(&mut rng, dim);
            let failing = rng.gen_bool(0.1);
            let filter = AccessFilter::new(user.clone());
            let got = if failing {
                index.hybrid_search(&query, &filter, &cfg, &FailingEmbedder { dim })
            } else {
                index.hybrid_search(&query, &filter, &cfg, &FixedEmbedder(qvec.clone()))
            }
            .map_err(|e| e.to_string())?;
            let (ref_lex, want) =
                reference_search(&chunks, &rows, &query, &user, (!failing).then_some(qvec.as_slice()), &cfg);

            let ctx = || format!("corpus {corpus}, query {query:?}, groups {user:?}");
            // The embedder is only consulted when something could be returned.
            let searched = !query.trim().is_empty() && chunks.iter().any(|c| allowed(&c.access_groups, &user));
            let expect_degraded = failing && searched;
            ensure(got.degraded == expect_degraded, || format!("{}: degraded = {}", ctx(), got.degraded))?;
            ensure(got.hits.len() == want.len(), || {
                format!("{}: {} hits, reference {}", ctx(), got.hits.len(), want.len())
            })?;
            for (g, w) in got.hits.iter().zip(&want) {
                ensure(g.chunk_id == w.id && g.lex_rank == w.lex && g.sem_rank == w.sem, || {
                    format!(
                        "{}: got {} ({:?},{:?}), reference {} ({:?},{:?})",
                        ctx(),
                        g.chunk_id,
                        g.lex_rank,
                        g.sem_rank,
                        w.id,
                        w.lex,
                        w.sem
                    )
                })?;
                let err = (g.fused_score - w.score).abs();
                max_err = max_err.max(err);
                ensure(err <= RRF_TOL, || format!("{}: fused score error {err:e}", ctx()))?;
            }

            let lex = index.bm25_search(&query, &filter, cfg.candidate_depth, Bm25Params::default());
            if !query.trim().is_empty() {
                ensure(lex.len() == ref_lex.len(), || format!("{}: bm25 list length", ctx()))?;
                for (g, w) in lex.iter().zip(&ref_lex) {
                    let err = (g.score - w.1).abs();
                    max_err = max_err.max(err);
                    ensure(g.chunk_id == w.0 && err <= RRF_TOL, || {
                        format!("{}: bm25 {} vs {}", ctx(), g.chunk_id, w.0)
                    })?;
                }
            }
            compared += 1;
        }
    }
    Ok(format!(
        "{compared} queries over {RETRIEVAL_CORPORA} corpora match, max score error {max_err:.1e}; bm25 hand case {hand_bm25:.4}, rrf 2/61 case {hand_rrf:.6}"
    ))
}

fn hand_cases() -> Result<(f64, f64), String> {
    let chunk = |id: &str, text: &str| Chunk {
        chunk_id: id.into(),
        doc_id: id.into(),
        seq: 0,
        start: 0,
        end: text.len(),
        text: text.into(),
        category: Category::Other,
        access_groups: AccessGroups::new(),
    };
    let index =
        SearchIndex::from_embeddings(vec![chunk("d1", "alpha beta"), chunk("d2", "alpha")], vec![vec![1.0], vec![1.0]])
            .map_err(|e| e.to_string())?;
    let hits = index.bm25_search("beta", &AccessFilter::public(), 10, Bm25Params::default());
    ensure(hits.len() == 1 && hits[0].chunk_id == "d1", || format!("bm25 hand case hits {hits:?}"))?;
    let closed_form = 2f64.ln() * 2.2 / 2.5;
    ensure((hits[0].score - 0.6100).abs() <= BM25_HAND_TOL && (hits[0].score - closed_form).abs() < 1e-12, || {
        format!("bm25 hand case {}", hits[0].score)
    })?;

    let fused = rrf_fuse(&[vec!["a".into(), "b".into()], vec!["a".into()]], 60.0, 10);
    ensure((fused[0].score - 2.0 / 61.0).abs() <= RRF_TOL, || format!("rrf hand case {}", fused[0].score))?;
    Ok((hits[0].score, fused[0].score))
}

// ---------------------------------------------------------------------------

/// Records every prompt and answers with the prompt itself, so anything
/// that reached the generator also shows up in the answer.
fn capturing_generator(log: Arc<Mutex<Vec<String>>>) -> StubGenerator {
    StubGenerator::from_fn(move |p| {
        log.lock().unwrap().push(p.to_string());
        Ok(p.to_string())
    })
}

fn red_team() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let vocab: Vec<String> = (0..40).map(|i| format!("term{i}")).collect();
    let mut trials = 0usize;
    let mut restricted_seen = 0usize;
    let mut denied_probes = 0usize;

    for corpus in 0..RED_TEAM_CORPORA {
        let n = rng.gen_range(5..=40);
        // Each chunk carries a marker token no other chunk contains.
        let marker = |i: usize| format!("zq{corpus}k{i}q");
        let chunks: Vec<Chunk> = (0..n)
            .map(|i| {
                let words = rng.gen_range(3..15);
                let text = format!("{} {} {}", random_words(&mut rng, &vocab, words), marker(i), marker(i));
                Chunk {
                    chunk_id: format!("doc{}#{i}", i / 2),
                    doc_id: format!("doc{}", i / 2),
                    seq: i % 2,
                    start: 0,
                    end: text.chars().count(),
                    text,
                    category: Category::Other,
                    access_groups: random_groups(&mut rng, 0.4),
                }
            })
            .collect();
        let embedder: Arc<dyn Embedder> =
            if rng.gen_bool(0.1) { Arc::new(FailingEmbedder { dim: 16 }) } else { Arc::new(HashEmbedder::new(16)) };
        let index = SearchIndex::build(chunks.clone(), &HashEmbedder::new(16)).map_err(|e| e.to_string())?;

        let mut users: BTreeMap<String, AccessGroups> = BTreeMap::new();
        let mut dir = UserDirectory::default();
        for u in 0..5 {
            let groups: AccessGroups = GROUPS.iter().filter(|_| rng.gen_bool(0.35)).map(|g| g.to_string()).collect();
            dir.insert(format!("user{u}"), groups.clone());
            users.insert(format!("user{u}"), groups);
        }
        let log = Arc::new(Mutex::new(Vec::new()));
        let svc = AssistantService::new(
            IndexSnapshot::new(Retriever::new(Arc::new(index), embedder)),
            dir,
            Arc::new(capturing_generator(log.clone())),
            HistoryStore::in_memory(),
            RetrievalConfig::default(),
            PromptConfig::default(),
        )
        .map_err(|e| e.to_string())?;

        for _ in 0..RED_TEAM_QUERIES_PER_CORPUS {
            // Includes ids absent from the directory, which get no groups.
            let user_id = match rng.gen_range(0..7) {
                5 => "stranger".to_string(),
                6 => String::new(),
                u => format!("user{u}"),
            };
            let groups = users.get(&user_id).cloned().unwrap_or_default();
            let words = rng.gen_range(1..6);
            let mut question = random_words(&mut rng, &vocab, words);
            // Probe for a specific chunk by its marker, authorized or not.
            let probe = rng.gen_bool(0.6).then(|| rng.gen_range(0..n));
            if let Some(i) = probe {
                question = format!("{question} {}", marker(i));
            }
            let top_n = rng.gen_range(1..=15);
            log.lock().unwrap().clear();
            let resp = svc.handle_query(&user_id, &question, Some(top_n)).map_err(|e| e.to_string())?;
            let prompts = std::mem::take(&mut *log.lock().unwrap());
            ensure(prompts.len() == 1, || format!("{} generator calls", prompts.len()))?;

            for p in &resp.provenance {
                let chunk = chunks.iter().find(|c| c.chunk_id == p.chunk_id).ok_or("unknown chunk in provenance")?;
                ensure(allowed(&chunk.access_groups, &groups), || {
                    format!(
                        "corpus {corpus}: {} ({:?}) returned to {user_id:?} ({groups:?})",
                        p.chunk_id, chunk.access_groups
                    )
                })?;
                ensure(p.access_groups == chunk.access_groups, || "provenance groups differ from the corpus".into())?;
                if !chunk.access_groups.is_empty() {
                    restricted_seen += 1;
                }
            }
            for (i, c) in chunks.iter().enumerate() {
                if allowed(&c.access_groups, &groups) {
                    continue;
                }
                let m = marker(i);
                // The question itself may name the marker; strip it before looking.
                let scrub = |s: &str| s.replace(&question, "");
                ensure(!scrub(&prompts[0]).contains(&m) && !scrub(&resp.answer).contains(&m), || {
                    format!("corpus {corpus}: unauthorized {} leaked to {user_id:?}", c.chunk_id)
                })?;
                ensure(!prompts[0].contains(&format!("] {}\n", c.chunk_id)), || {
                    format!("unauthorized id {}", c.chunk_id)
                })?;
                if probe == Some(i) {
                    denied_probes += 1;
                }
            }
            trials += 1;
        }
    }
    ensure(restricted_seen > 0 && denied_probes > 0, || "randomization never exercised restricted chunks".into())?;
    Ok(format!(
        "{trials} trials, 0 leaks ({restricted_seen} authorized restricted passages served, {denied_probes} probes for forbidden chunks denied)"
    ))
}

// ---------------------------------------------------------------------------

fn doc_chunks(rng: &mut ChaCha8Rng, vocab: &[String], doc: usize, per_doc: usize, groups: &AccessGroups) -> Vec<Chunk> {
    (0..per_doc)
        .map(|s| {
            let words = rng.gen_range(5..20);
            let text = random_words(rng, vocab, words);
            Chunk {
                chunk_id: format!("doc{doc}-c{s}q"),
                doc_id: format!("doc{doc}"),
                seq: s,
                start: 0,
                end: text.chars().count(),
                text,
                category: Category::Other,
                access_groups: groups.clone(),
            }
        })
        .collect()
}

fn check_pure(mc: &RaftExample, index: &SearchIndex) -> Result<(), String> {
    let source = mc.source_doc_id.as_deref().ok_or("missing-context example without a source")?;
    ensure(mc.missing_context, || format!("{} not flagged missing_context", mc.example_id))?;
    for id in &mc.chunk_ids {
        let c = index.chunk(id).ok_or_else(|| format!("unknown chunk {id}"))?;
        ensure(c.doc_id != source, || format!("{}: chunk {id} belongs to source {source}", mc.example_id))?;
    }
    for c in index.chunks().iter().filter(|c| c.doc_id == source) {
        ensure(!mc.prompt.contains(&c.chunk_id), || format!("{}: prompt cites {}", mc.example_id, c.chunk_id))?;
    }
    Ok(())
}

fn qa_for(rng: &mut ChaCha8Rng, chunk: &Chunk, id: String) -> QaPair {
    let words: Vec<&str> = chunk.text.split(' ').collect();
    let question: Vec<&str> = words.choose_multiple(rng, 3.min(words.len())).copied().collect();
    QaPair {
        qa_id: id,
        question: format!("What about {}?", question.join(" ")),
        answer: chunk.text.clone(),
        provenance: Provenance::Synthetic,
        source_doc_id: Some(chunk.doc_id.clone()),
        category: Some(Category::Other),
    }
}

fn missing_context_purity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let vocab: Vec<String> = (0..25).map(|i| format!("v{i}")).collect();
    let prompt = PromptConfig::default();
    let mut checked = 0usize;

    for run in 0..MC_RUNS {
        let docs = rng.gen_range(4..=12);
        let mut chunks = Vec::new();
        for d in 0..docs {
            let per = rng.gen_range(1..=4);
            let groups = random_groups(&mut rng, 0.5);
            chunks.extend(doc_chunks(&mut rng, &vocab, d, per, &groups));
        }
        let index = Arc::new(SearchIndex::build(chunks.clone(), &HashEmbedder::new(16)).map_err(|e| e.to_string())?);
        let retriever = Retriever::new(index.clone(), Arc::new(HashEmbedder::new(16)));
        let filter = AccessFilter::new(GROUPS.iter().filter(|_| rng.gen_bool(0.5)).map(|g| g.to_string()).collect());
        let top_n = rng.gen_range(1..=10);
        let rcfg = RetrievalConfig { top_n, ..Default::default() };

        let pairs: Vec<QaPair> = (0..docs)
            .map(|d| {
                let first = chunks.iter().find(|c| c.doc_id == format!("doc{d}")).unwrap();
                qa_for(&mut rng, first, format!("syn-doc{d}"))
            })
            .collect();
        for qa in &pairs {
            let ex = build_raft_example(qa, &retriever, &filter, &rcfg, &prompt).map_err(|e| e.to_string())?;
            let mc = make_missing_context(&ex, &index, &prompt).map_err(|e| e.to_string())?;
            check_pure(&mc, &index)?;
            let kept: Vec<&String> = ex
                .chunk_ids
                .iter()
                .filter(|id| index.chunk(id).unwrap().doc_id != *qa.source_doc_id.as_ref().unwrap())
                .collect();
            ensure(mc.chunk_ids.iter().collect::<Vec<_>>() == kept, || format!("run {run}: remaining order changed"))?;
            checked += 1;
        }

        let cfg = RaftBuildConfig {
            retrieval: rcfg,
            filter: filter.clone(),
            test_fraction: 0.25,
            missing_context_test: rng.gen_range(1..=docs),
            idk: IdkPolicy { fraction: 0.5, seed: run as u64, ..Default::default() },
            seed: run as u64,
            ..Default::default()
        };
        let data = build_raft_datasets(pairs, Vec::new(), &retriever, &cfg).map_err(|e| e.to_string())?;
        let test_ids: HashSet<&str> = data.test.iter().map(|e| e.example_id.as_str()).collect();
        for mc in &data.test_missing_context {
            check_pure(mc, &index)?;
            ensure(!test_ids.contains(mc.example_id.as_str()), || format!("{} derives from test", mc.example_id))?;
            checked += 1;
        }
        for idk in data.train.iter().filter(|e| e.example_id.ends_with("-idk")) {
            check_pure(idk, &index)?;
            let base = idk.example_id.trim_end_matches("-idk");
            ensure(!test_ids.contains(base), || format!("{base} is a test example"))?;
            checked += 1;
        }
    }

    let (appended, from_test) = idk_900()?;
    Ok(format!(
        "{checked} missing-context examples over {MC_RUNS} runs cite no source chunk; 900 train at 0.10 -> {appended} IDK copies, {from_test} from test"
    ))
}

fn idk_900() -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let vocab: Vec<String> = (0..60).map(|i| format!("t{i}")).collect();
    let mut chunks = Vec::new();
    for d in 0..500 {
        chunks.extend(doc_chunks(&mut rng, &vocab, d, 2, &AccessGroups::new()));
    }
    let index = Arc::new(SearchIndex::build(chunks.clone(), &HashEmbedder::new(16)).map_err(|e| e.to_string())?);
    let retriever = Retriever::new(index.clone(), Arc::new(HashEmbedder::new(16)));
    let prompt = PromptConfig::default();
    let rcfg = RetrievalConfig { top_n: 5, ..Default::default() };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in 0..500 {
        let first = &chunks[d * 2];
        let reps = if d < 400 { 2 } else { 1 };
        for r in 0..reps {
            let qa = qa_for(&mut rng, first, format!("qa-{d}-{r}"));
            let mut ex = build_raft_example(&qa, &retriever, &AccessFilter::public(), &rcfg, &prompt)
                .map_err(|e| e.to_string())?;
            if d < 450 {
                train.push(ex);
            } else {
                ex.split = Split::Test;
                test.push(ex);
            }
        }
    }
    // 400 docs x 2 + 50 docs x 1 = 850 so far; top up to 900.
    for d in 0..50 {
        let qa = qa_for(&mut rng, &chunks[d * 2 + 1], format!("qa-{d}-extra"));
        train.push(
            build_raft_example(&qa, &retriever, &AccessFilter::public(), &rcfg, &prompt).map_err(|e| e.to_string())?,
        );
    }
    ensure(train.len() == 900, || format!("built {} train examples", train.len()))?;

    // Test examples mixed into the input must never be picked.
    let mut mixed = train.clone();
    mixed.extend(test.iter().cloned());
    let policy = IdkPolicy { fraction: 0.10, seed: 5, ..Default::default() };
    let out = augment_with_idk(train.clone(), &policy, &index, &prompt).map_err(|e| e.to_string())?;
    let copies = &out[900..];
    ensure(copies.len() == 90, || format!("{} IDK copies", copies.len()))?;
    let train_ids: HashSet<&str> = train.iter().map(|e| e.example_id.as_str()).collect();
    let test_ids: HashSet<&str> = test.iter().map(|e| e.example_id.as_str()).collect();
    let mut from_test = 0;
    for c in copies {
        check_pure(c, &index)?;
        ensure(c.answer == DEFAULT_IDK_LABEL, || format!("{} answer {:?}", c.example_id, c.answer))?;
        let base = c.example_id.strip_suffix("-idk").ok_or("copy without -idk suffix")?;
        ensure(train_ids.contains(base), || format!("{base} not a train example"))?;
        from_test += usize::from(test_ids.contains(base));
    }

    let mixed_out = augment_with_idk(mixed, &policy, &index, &prompt).map_err(|e| e.to_string())?;
    for c in mixed_out.iter().filter(|e| e.example_id.ends_with("-idk")) {
        from_test += usize::from(test_ids.contains(c.example_id.trim_end_matches("-idk")));
    }
    ensure(from_test == 0, || format!("{from_test} IDK copies derived from test"))?;
    Ok((copies.len(), from_test))
}

// ---------------------------------------------------------------------------

fn metric_identities() -> Outcome {
    let scorer = LexicalOracleScorer;
    let cfg = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let vocab: Vec<String> =
        ["the", "cat", "timing", "slack", "route", "a", "is", "report", "net", "clock", "Setup", "HOLD"]
            .iter()
            .map(|s| s.to_string())
            .collect();

    for i in 0..1000 {
        let k = rng.gen_range(1..12);
        let s = format!("{}{}", random_words(&mut rng, &vocab, k), if i % 2 == 0 { "." } else { "" });
        let p = normalized_precision(&s, &s, &scorer, &cfg).map_err(|e| e.to_string())?;
        let r = normalized_recall(&s, &s, &scorer, &cfg).map_err(|e| e.to_string())?;
        ensure(p == 1.0 && r == 1.0 && f1(p, r) == 1.0, || format!("{s:?}: p={p} r={r}"))?;
    }

    let bare = MetricConfig { rephrase_prompts: vec![String::new()], ..Default::default() };
    let recall = normalized_recall("the cat", "the", &scorer, &bare).map_err(|e| e.to_string())?;
    let by_hand = (1f64 / 2.0).ln() / (((2f64 / 3.0).ln() + (1f64 / 3.0).ln()) / 2.0);
    ensure((recall - 0.9217).abs() <= RECALL_HAND_TOL, || format!("hand case recall {recall}"))?;
    ensure((recall - by_hand).abs() < 1e-12, || format!("hand case recall {recall} vs closed form {by_hand}"))?;

    for _ in 0..METRIC_PAIRS {
        let k = rng.gen_range(1..10);
        let reference = random_words(&mut rng, &vocab, k);
        let pred = match rng.gen_range(0..10) {
            0 => String::new(),
            1 => " ?! ".to_string(),
            _ => {
                let k = rng.gen_range(1..15);
                random_words(&mut rng, &vocab, k)
            }
        };
        let p = normalized_precision(&reference, &pred, &scorer, &cfg).map_err(|e| e.to_string())?;
        let r = normalized_recall(&reference, &pred, &scorer, &cfg).map_err(|e| e.to_string())?;
        let f = f1(p, r);
        ensure([p, r, f].iter().all(|x| (0.0..=1.0).contains(x)), || format!("{reference:?} / {pred:?}: {p} {r} {f}"))?;
    }
    Ok(format!("identity holds on 1000 strings; hand recall {recall:.4}; {METRIC_PAIRS} random pairs within [0, 1]"))
}

// ---------------------------------------------------------------------------

const E2E_CATEGORIES: [(&str, Category); 4] = [
    ("timing", Category::Timing),
    ("devops", Category::DevOps),
    ("guide", Category::DesignGuide),
    ("cmd", Category::CommandReference),
];

fn write_seeded_docs(dir: &Path) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let vocab: Vec<String> = [
        "timing",
        "slack",
        "setup",
        "hold",
        "clock",
        "skew",
        "route",
        "placement",
        "netlist",
        "constraint",
        "report",
        "violation",
        "buffer",
        "pipeline",
        "deploy",
        "container",
        "build",
        "license",
        "server",
        "command",
        "option",
        "default",
        "value",
        "layout",
        "spacing",
        "metal",
        "via",
        "rule",
        "check",
        "design",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for (c, (dir_name, _)) in E2E_CATEGORIES.iter().enumerate() {
        std::fs::create_dir_all(dir.join(dir_name))?;
        for d in 0..5 {
            let mut body = format!("Topic {dir_name} {d}\n\n");
            while body.len() < 1500 + 300 * d {
                let k = rng.gen_range(6..14);
                body.push_str(&format!("The {} {}. ", dir_name, random_words(&mut rng, &vocab, k)));
            }
            std::fs::write(dir.join(dir_name).join(format!("doc{c}{d}.txt")), body)?;
        }
    }
    Ok(())
}

struct E2eRun {
    files: BTreeMap<String, Vec<u8>>,
    synthetic: usize,
    rafs: usize,
    report_line: String,
}

fn e2e_once(input: &Path, out: &Path) -> Result<E2eRun, String> {
    let err = |e: &dyn std::fmt::Display| e.to_string();
    let mut categories = PatternMap::new();
    for (name, cat) in E2E_CATEGORIES {
        categories.push(&format!("*/{name}/*"), cat).map_err(|e| err(&e))?;
    }
    let mut groups = PatternMap::new();
    groups.push("*/guide/*", ["design_guides".to_string()].into_iter().collect()).map_err(|e| err(&e))?;

    let store = CorpusStore::new(out.join("corpus"));
    let stats =
        ingest(&[input.to_path_buf()], &groups, &categories, &CorpusConfig::default(), &store).map_err(|e| err(&e))?;
    ensure(stats.docs_kept == 20, || format!("ingested {} docs", stats.docs_kept))?;

    let history = HistoryStore::in_memory();
    for i in 0..10 {
        let topic = ["setup slack", "container build", "metal spacing", "report option", "clock skew"][i % 5];
        history
            .append(HistoryEntry::new(format!("How do I fix {topic} issue {i}?"), "See the guide.", None))
            .map_err(|e| err(&e))?;
    }
    let history = history.all();
    ensure(history.len() == 10, || "history size".into())?;

    let docs = store.load_documents().map_err(|e| err(&e))?;
    let mut sorted = docs.clone();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    let (rafs_docs, plain_docs) = sorted.split_at(5);
    let generator = stubs::dispatching();
    let corpus_cfg = CorpusConfig::default();
    let with_rafs = SynthConfig { use_rafs: true, ..Default::default() };
    let a = run_synthesis(rafs_docs.to_vec(), &history, &with_rafs, &corpus_cfg, &generator, None, 1);
    let b = run_synthesis(plain_docs.to_vec(), &history, &SynthConfig::default(), &corpus_cfg, &generator, None, 1);
    ensure(a.failures.is_empty() && b.failures.is_empty(), || "synthesis failures".into())?;
    let mut synthetic = a.pairs;
    synthetic.extend(b.pairs);
    let rafs = synthetic.iter().filter(|p| p.provenance == Provenance::SyntheticRafs).count();
    ensure(synthetic.len() == 20 && rafs == 5, || format!("{} pairs, {rafs} with RAFS", synthetic.len()))?;

    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::default());
    let index =
        SearchIndex::build(store.load_chunks().map_err(|e| err(&e))?, embedder.as_ref()).map_err(|e| err(&e))?;
    let retriever = Retriever::new(Arc::new(index), embedder);
    let cfg = RaftBuildConfig {
        filter: AccessFilter::from_groups(["design_guides"]),
        test_fraction: 0.2,
        idk: IdkPolicy { fraction: 0.10, ..Default::default() },
        seed: 7,
        ..Default::default()
    };
    let data = build_raft_datasets(synthetic.clone(), Vec::new(), &retriever, &cfg).map_err(|e| err(&e))?;
    let idk = data.train.iter().filter(|e| e.example_id.ends_with("-idk")).count();
    ensure(data.test.len() == 4 && idk == 1, || format!("{} test, {idk} IDK", data.test.len()))?;
    let ds_dir = out.join("dataset");
    write_datasets(&ds_dir, &data).map_err(|e| err(&e))?;

    let answer = |ex: &RaftExample| -> Result<Prediction, String> {
        let response =
            stubs::rag_first_context().generate(&GenerationRequest::new(ex.prompt.clone())).map_err(|e| err(&e))?;
        Ok(Prediction { example_id: ex.example_id.clone(), response })
    };
    let full_preds = data.test.iter().map(answer).collect::<Result<Vec<_>, _>>()?;
    let mc_preds = data.test_missing_context.iter().map(answer).collect::<Result<Vec<_>, _>>()?;
    let scorer = LexicalOracleScorer;
    let metric = MetricConfig::default();
    let full = score_predictions(&data.test, &full_preds, &scorer, &metric).map_err(|e| err(&e))?;
    let mc = score_predictions(&data.test_missing_context, &mc_preds, &scorer, &metric).map_err(|e| err(&e))?;
    ensure(full.n == data.test.len() && full.samples.len() == full.n, || "incomplete full report".into())?;
    ensure(mc.n == data.test_missing_context.len() && mc.samples.len() == mc.n && mc.n > 0, || {
        "incomplete MC report".into()
    })?;
    for s in full.samples.iter().chain(&mc.samples) {
        ensure([s.precision, s.recall, s.f1].iter().all(|x| (0.0..=1.0).contains(x)), || format!("{s:?}"))?;
    }
    let leak = leakage_report(&full, &mc);
    ensure(leak.recall_gap.is_finite() && leak.full_n == full.n && leak.missing_context_n == mc.n, || {
        format!("{leak:?}")
    })?;

    let mut files = BTreeMap::new();
    for entry in std::fs::read_dir(&ds_dir).map_err(|e| err(&e))? {
        let path = entry.map_err(|e| err(&e))?.path();
        files.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(&path).map_err(|e| err(&e))?,
        );
    }
    files.insert("synthetic.json".into(), serde_json::to_vec(&synthetic).map_err(|e| err(&e))?);
    Ok(E2eRun {
        files,
        synthetic: synthetic.len(),
        rafs,
        report_line: format!(
            "F1 {:.3} full / {:.3} missing-context, recall gap {:.3}",
            full.mean_f1, mc.mean_f1, leak.recall_gap
        ),
    })
}

fn end_to_end() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let input = tmp.path().join("docs");
    write_seeded_docs(&input).map_err(|e| e.to_string())?;
    let first = e2e_once(&input, &tmp.path().join("run1"))?;
    let second = e2e_once(&input, &tmp.path().join("run2"))?;
    ensure(first.files.len() == 5, || format!("files {:?}", first.files.keys().collect::<Vec<_>>()))?;
    for (name, bytes) in &first.files {
        ensure(second.files.get(name) == Some(bytes), || format!("{name} differs between runs"))?;
    }
    Ok(format!(
        "{} pairs ({} RAFS), {} files byte-identical across runs; {}",
        first.synthetic,
        first.rafs,
        first.files.len(),
        first.report_line
    ))
}
