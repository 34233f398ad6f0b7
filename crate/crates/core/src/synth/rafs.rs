use std::collections::HashSet;

use crate::corpus::{AccessGroups, Category, Chunk, HistoryEntry};
use crate::retrieval::{AccessFilter, AclTable, Bm25Index, Bm25Params};

/// Picks up to `k` past user questions relevant to a target document.
///
/// Each history entry is indexed as `question + " " + response` and ranked
/// with BM25 against `target_body`. Entries sharing no term with the body
/// follow the scored ones in `entry_id` order, so the result has
/// `min(k, history.len())` questions.
pub fn select_rafs_examples(target_body: &str, history: &[HistoryEntry], k: usize) -> Vec<String> {
    if k == 0 || history.is_empty() {
        return Vec::new();
    }
    let docs: Vec<Chunk> = history
        .iter()
        .map(|e| {
            let text = format!("{} {}", e.question, e.response);
            Chunk {
                chunk_id: e.entry_id.clone(),
                doc_id: e.entry_id.clone(),
                seq: 0,
                start: 0,
                end: text.chars().count(),
                text,
                category: Category::Other,
                access_groups: AccessGroups::new(),
            }
        })
        .collect();
    let ids: Vec<String> = docs.iter().map(|d| d.chunk_id.clone()).collect();
    let acl = AclTable::build(&docs);
    let index = Bm25Index::build(&docs, &acl);
    let public = AccessFilter::public();
    let ranked = index.search(target_body, &acl.mask(&public), &ids, k, Bm25Params::default());

    let mut picked: Vec<usize> = ranked.into_iter().map(|(i, _)| i).collect();
    if picked.len() < k {
        let seen: HashSet<usize> = picked.iter().copied().collect();
        let mut rest: Vec<usize> = (0..history.len()).filter(|i| !seen.contains(i)).collect();
        rest.sort_by(|a, b| ids[*a].cmp(&ids[*b]));
        picked.extend(rest.into_iter().take(k - picked.len()));
    }
    picked.into_iter().map(|i| history[i].question.clone()).collect()
}
