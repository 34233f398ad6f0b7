//! On-disk index format.
//!
//! Two files live in the index directory, each starting with the 8-byte
//! magic `RAGRAFTX`, a version byte and a kind byte:
//!
//! - `lexical.idx` (kind `L`): JSON body with chunk ids, token lengths and
//!   postings.
//! - `vectors.idx` (kind `V`): little-endian `u32` dim, `u32` row count,
//!   then `count * dim` `f32` values in chunk order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AclTable, Bm25Index, RetrievalError, SearchIndex, VectorIndex};
use crate::corpus::Chunk;

pub const INDEX_MAGIC: &[u8; 8] = b"RAGRAFTX";
pub const INDEX_VERSION: u8 = 1;

const LEXICAL_FILE: &str = "lexical.idx";
const VECTOR_FILE: &str = "vectors.idx";

#[derive(Serialize, Deserialize)]
struct LexicalBody {
    chunk_ids: Vec<String>,
    lengths: Vec<u32>,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io { path: path.display().to_string(), source }
}

fn header(kind: u8) -> Vec<u8> {
    let mut out = INDEX_MAGIC.to_vec();
    out.push(INDEX_VERSION);
    out.push(kind);
    out
}

fn strip_header<'a>(bytes: &'a [u8], kind: u8, path: &Path) -> Result<&'a [u8], RetrievalError> {
    if bytes.len() < 10 || &bytes[..8] != INDEX_MAGIC || bytes[9] != kind {
        return Err(RetrievalError::BadMagic(path.display().to_string()));
    }
    if bytes[8] != INDEX_VERSION {
        return Err(RetrievalError::UnsupportedVersion {
            path: path.display().to_string(),
            found: bytes[8],
            expected: INDEX_VERSION,
        });
    }
    Ok(&bytes[10..])
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RetrievalError> {
    let tmp = path.with_extension("idx.tmp");
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub(super) fn save(index: &SearchIndex, dir: &Path) -> Result<(), RetrievalError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let body = LexicalBody {
        chunk_ids: index.chunks().iter().map(|c| c.chunk_id.clone()).collect(),
        lengths: index.lexical().lengths.clone(),
        postings: index.lexical().postings.clone(),
    };
    let mut lexical = header(b'L');
    serde_json::to_writer(&mut lexical, &body).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
    write_atomic(&dir.join(LEXICAL_FILE), &lexical)?;

    let vectors = index.vectors();
    let mut out = header(b'V');
    out.extend((vectors.dim() as u32).to_le_bytes());
    out.extend((vectors.len() as u32).to_le_bytes());
    for x in vectors.raw() {
        out.extend(x.to_le_bytes());
    }
    write_atomic(&dir.join(VECTOR_FILE), &out)
}

pub(super) fn load(dir: &Path, chunks: Vec<Chunk>) -> Result<SearchIndex, RetrievalError> {
    let lex_path = dir.join(LEXICAL_FILE);
    let bytes = fs::read(&lex_path).map_err(io_err(&lex_path))?;
    let body: LexicalBody = serde_json::from_slice(strip_header(&bytes, b'L', &lex_path)?)
        .map_err(|e| RetrievalError::Corrupt(format!("{}: {e}", lex_path.display())))?;
    if body.chunk_ids.len() != chunks.len() || body.chunk_ids.iter().zip(&chunks).any(|(id, c)| *id != c.chunk_id) {
        return Err(RetrievalError::OutOfDate);
    }

    let vec_path = dir.join(VECTOR_FILE);
    let bytes = fs::read(&vec_path).map_err(io_err(&vec_path))?;
    let rest = strip_header(&bytes, b'V', &vec_path)?;
    if rest.len() < 8 {
        return Err(RetrievalError::Corrupt(format!("{}: truncated header", vec_path.display())));
    }
    let dim = u32::from_le_bytes(rest[0..4].try_into().expect("4 bytes")) as usize;
    let count = u32::from_le_bytes(rest[4..8].try_into().expect("4 bytes")) as usize;
    let payload = &rest[8..];
    if payload.len() != dim * count * 4 {
        return Err(RetrievalError::Corrupt(format!("{}: payload size mismatch", vec_path.display())));
    }
    let data: Vec<f32> = payload.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();

    let acl = AclTable::build(&chunks);
    let lexical = Bm25Index::from_parts(body.lengths, body.postings, &acl);
    SearchIndex::assemble(chunks, acl, lexical, VectorIndex::from_flat(dim, data))
}
