use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{rank_order, AclTable, AuthMask};
use crate::corpus::Chunk;
use crate::tokenize::tokenize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// `ln(1 + (n - df + 0.5) / (df + 0.5))`; always positive.
pub fn bm25_idf(df: u64, n: u64) -> f64 {
    (1.0 + (n as f64 - df as f64 + 0.5) / (df as f64 + 0.5)).ln()
}

pub fn bm25_term(tf: u32, idf: f64, doc_len: u32, avgdl: f64, p: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = 1.0 - p.b + p.b * f64::from(doc_len) / avgdl;
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
}

/// Inverted index over chunk texts. Postings are `(chunk index, tf)` pairs
/// in ascending chunk order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bm25Index {
    pub(crate) lengths: Vec<u32>,
    pub(crate) postings: BTreeMap<String, Vec<(u32, u32)>>,
    /// (chunk count, summed token length) per access-group set.
    #[serde(skip)]
    set_totals: Vec<(u64, u64)>,
}

impl Bm25Index {
    pub fn build(chunks: &[Chunk], acl: &AclTable) -> Self {
        let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
        let mut lengths = Vec::with_capacity(chunks.len());
        for (i, chunk) in chunks.iter().enumerate() {
            let tokens = tokenize(&chunk.text);
            lengths.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i as u32, count));
            }
        }
        Self::from_parts(lengths, postings, acl)
    }

    pub(crate) fn from_parts(lengths: Vec<u32>, postings: BTreeMap<String, Vec<(u32, u32)>>, acl: &AclTable) -> Self {
        let mut set_totals = vec![(0u64, 0u64); acl.set_count()];
        for (i, len) in lengths.iter().enumerate() {
            let t = &mut set_totals[acl.set_of(i)];
            t.0 += 1;
            t.1 += u64::from(*len);
        }
        Bm25Index { lengths, postings, set_totals }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    /// Scores authorized chunks against the distinct query terms. Corpus
    /// statistics cover authorized chunks only. Returns up to `depth`
    /// `(chunk index, score)` pairs; chunks sharing no term are omitted.
    pub fn search(
        &self,
        query: &str,
        mask: &AuthMask<'_>,
        ids: &[String],
        depth: usize,
        params: Bm25Params,
    ) -> Vec<(usize, f64)> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() || depth == 0 {
            return Vec::new();
        }
        let (n, total_len) = self
            .set_totals
            .iter()
            .enumerate()
            .filter(|(s, _)| mask.allows_set(*s))
            .fold((0u64, 0u64), |acc, (_, t)| (acc.0 + t.0, acc.1 + t.1));
        if n == 0 {
            return Vec::new();
        }
        let avgdl = total_len as f64 / n as f64;

        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in &terms {
            let Some(list) = self.postings.get(term) else { continue };
            let allowed: Vec<&(u32, u32)> = list.iter().filter(|(d, _)| mask.allows(*d as usize)).collect();
            if allowed.is_empty() {
                continue;
            }
            let idf = bm25_idf(allowed.len() as u64, n);
            for &&(doc, tf) in &allowed {
                *scores.entry(doc).or_insert(0.0) += bm25_term(tf, idf, self.lengths[doc as usize], avgdl, params);
            }
        }

        let mut ranked: Vec<(usize, f64)> = scores.into_iter().map(|(d, s)| (d as usize, s)).collect();
        ranked.sort_by(|a, b| rank_order(a.1, &ids[a.0], b.1, &ids[b.0]));
        ranked.truncate(depth);
        ranked
    }
}
