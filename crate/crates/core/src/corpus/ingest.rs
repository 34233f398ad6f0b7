use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{chunk_document, AccessGroups, Category, CorpusConfig, CorpusError, CorpusStore, Document};

/// Ordered `glob -> value` rules; the first matching pattern wins.
#[derive(Debug, Clone)]
pub struct PatternMap<T> {
    rules: Vec<(glob::Pattern, T)>,
}

impl<T> Default for PatternMap<T> {
    fn default() -> Self {
        PatternMap { rules: Vec::new() }
    }
}

impl<T: Clone> PatternMap<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, pattern: &str, value: T) -> Result<(), CorpusError> {
        let compiled = glob::Pattern::new(pattern)
            .map_err(|e| CorpusError::InvalidPattern { pattern: pattern.to_string(), reason: e.to_string() })?;
        self.rules.push((compiled, value));
        Ok(())
    }

    pub fn lookup(&self, path: &str) -> Option<T> {
        self.rules.iter().find(|(p, _)| p.matches(path)).map(|(_, v)| v.clone())
    }

    /// Parses `pattern : value` lines; `#` starts a comment.
    pub fn parse_with<F>(text: &str, mut parse_value: F) -> Result<Self, CorpusError>
    where
        F: FnMut(&str) -> Result<T, CorpusError>,
    {
        let mut map = PatternMap::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (pattern, value) = line.rsplit_once(':').ok_or_else(|| CorpusError::InvalidPattern {
                pattern: line.to_string(),
                reason: "expected `pattern : value`".into(),
            })?;
            map.push(pattern.trim(), parse_value(value.trim())?)?;
        }
        Ok(map)
    }
}

impl PatternMap<AccessGroups> {
    pub fn parse_groups(text: &str) -> Result<Self, CorpusError> {
        Self::parse_with(text, |v| {
            Ok(v.split(',').map(str::trim).filter(|g| !g.is_empty()).map(String::from).collect())
        })
    }
}

impl PatternMap<Category> {
    pub fn parse_categories(text: &str) -> Result<Self, CorpusError> {
        Self::parse_with(text, str::parse)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestFailure {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub docs_kept: usize,
    pub docs_dropped: usize,
    pub chunks_total: usize,
    pub chunks_per_category: BTreeMap<Category, usize>,
    pub failures: Vec<IngestFailure>,
}

/// Stable document id derived from the source path.
pub fn doc_id_for(path: &str) -> String {
    let digest = Sha256::digest(path.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn title_of(body: &str, path: &Path) -> String {
    body.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(|l| l.chars().take(120).collect())
        .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
}

/// Expands directories into the regular files below them, sorted and
/// de-duplicated. Plain file paths are passed through.
pub fn expand_paths(paths: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(
                walkdir::WalkDir::new(p)
                    .into_iter()
                    .filter_map(Result::ok)
                    .filter(|e| e.file_type().is_file())
                    .map(|e| e.into_path()),
            );
        } else {
            out.push(p.clone());
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Reads, filters and chunks the given files, then replaces the corpus in
/// `store` with the result. Unreadable files are recorded in the stats and
/// skipped. The serving corpus keeps full bodies: only the minimum-length
/// filter applies here.
pub fn ingest(
    paths: &[PathBuf],
    group_map: &PatternMap<AccessGroups>,
    category_map: &PatternMap<Category>,
    cfg: &CorpusConfig,
    store: &CorpusStore,
) -> Result<IngestStats, CorpusError> {
    cfg.validate()?;
    let mut stats = IngestStats::default();
    let mut docs = Vec::new();
    let mut chunks = Vec::new();

    for path in expand_paths(paths) {
        let source_path = path.to_string_lossy().replace('\\', "/");
        let body = match fs::read_to_string(&path) {
            Ok(b) => b,
            Err(e) => {
                stats.failures.push(IngestFailure { path: source_path, error: e.to_string() });
                continue;
            }
        };
        if body.chars().count() < cfg.min_doc_chars || body.is_empty() {
            stats.docs_dropped += 1;
            continue;
        }
        let doc = Document {
            doc_id: doc_id_for(&source_path),
            title: title_of(&body, &path),
            category: category_map.lookup(&source_path).unwrap_or(Category::Other),
            access_groups: group_map.lookup(&source_path).unwrap_or_default(),
            source_path,
            body,
        };
        let doc_chunks = chunk_document(&doc, cfg)?;
        *stats.chunks_per_category.entry(doc.category).or_default() += doc_chunks.len();
        stats.chunks_total += doc_chunks.len();
        stats.docs_kept += 1;
        chunks.extend(doc_chunks);
        docs.push(doc);
    }

    store.save(&docs, &chunks)?;
    tracing::info!(
        kept = stats.docs_kept,
        dropped = stats.docs_dropped,
        chunks = stats.chunks_total,
        "ingest finished"
    );
    Ok(stats)
}
