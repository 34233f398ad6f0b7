use super::{Chunk, CorpusConfig, CorpusError, Document};

/// Character spans `[start, end)` covering a body of `len` characters.
///
/// Chunk `i` starts at `i * (chunk_size - overlap)`; the final chunk ends at
/// `len` and may be shorter than `chunk_size`.
pub fn chunk_spans(len: usize, cfg: &CorpusConfig) -> Vec<(usize, usize)> {
    if len == 0 {
        return Vec::new();
    }
    let count = if len <= cfg.chunk_size { 1 } else { (len - cfg.overlap).div_ceil(cfg.stride()) };
    (0..count)
        .map(|i| {
            let start = i * cfg.stride();
            (start, (start + cfg.chunk_size).min(len))
        })
        .collect()
}

pub fn chunk_document(doc: &Document, cfg: &CorpusConfig) -> Result<Vec<Chunk>, CorpusError> {
    if doc.body.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    cfg.validate()?;

    // byte offset of every char boundary, plus the end of the string
    let mut bounds: Vec<usize> = doc.body.char_indices().map(|(b, _)| b).collect();
    let len = bounds.len();
    bounds.push(doc.body.len());

    Ok(chunk_spans(len, cfg)
        .into_iter()
        .enumerate()
        .map(|(seq, (start, end))| Chunk {
            chunk_id: format!("{}-{:05}", doc.doc_id, seq),
            doc_id: doc.doc_id.clone(),
            seq,
            start,
            end,
            text: doc.body[bounds[start]..bounds[end]].to_string(),
            category: doc.category,
            access_groups: doc.access_groups.clone(),
        })
        .collect())
}
