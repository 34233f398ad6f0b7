use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{Chunk, CorpusError, Document, HistoryStore};

pub const DOCS_FILE: &str = "docs.jsonl";
pub const CHUNKS_FILE: &str = "chunks.jsonl";
pub const HISTORY_FILE: &str = "history.jsonl";

/// Writes one JSON object per line. The file is written to a sibling
/// temporary path and renamed into place so readers never observe a
/// partially written file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(|e| CorpusError::io(&tmp, e))?;
        let mut out = BufWriter::new(file);
        for (i, rec) in records.iter().enumerate() {
            serde_json::to_writer(&mut out, rec).map_err(|source| CorpusError::Json {
                path: tmp.display().to_string(),
                line: i + 1,
                source,
            })?;
            out.write_all(b"\n").map_err(|e| CorpusError::io(&tmp, e))?;
        }
        out.flush().map_err(|e| CorpusError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CorpusError::io(path, e))
}

/// Reads a JSONL file, skipping blank lines. A missing file reads as empty.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(CorpusError::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| CorpusError::Json {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?);
    }
    Ok(out)
}

/// On-disk corpus directory: `docs.jsonl`, `chunks.jsonl`, `history.jsonl`.
#[derive(Debug, Clone)]
pub struct CorpusStore {
    dir: PathBuf,
}

impl CorpusStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        CorpusStore { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn save(&self, docs: &[Document], chunks: &[Chunk]) -> Result<(), CorpusError> {
        write_jsonl(&self.dir.join(DOCS_FILE), docs)?;
        write_jsonl(&self.dir.join(CHUNKS_FILE), chunks)
    }

    pub fn load_documents(&self) -> Result<Vec<Document>, CorpusError> {
        read_jsonl(&self.dir.join(DOCS_FILE))
    }

    pub fn load_chunks(&self) -> Result<Vec<Chunk>, CorpusError> {
        read_jsonl(&self.dir.join(CHUNKS_FILE))
    }

    pub fn history(&self) -> Result<HistoryStore, CorpusError> {
        HistoryStore::open(self.dir.join(HISTORY_FILE))
    }
}
