use std::collections::HashMap;

use crate::corpus::{AccessGroups, Chunk};

use super::AccessFilter;

/// Interned access-group sets: chunks usually share a handful of distinct
/// sets, so authorization is decided once per set rather than per chunk.
#[derive(Debug, Clone, Default)]
pub struct AclTable {
    sets: Vec<AccessGroups>,
    set_of: Vec<u32>,
}

impl AclTable {
    pub fn build(chunks: &[Chunk]) -> Self {
        let mut interned: HashMap<&AccessGroups, u32> = HashMap::new();
        let mut sets = Vec::new();
        let set_of = chunks
            .iter()
            .map(|c| {
                *interned.entry(&c.access_groups).or_insert_with(|| {
                    sets.push(c.access_groups.clone());
                    (sets.len() - 1) as u32
                })
            })
            .collect();
        AclTable { sets, set_of }
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    /// Index of the group set chunk `i` belongs to.
    pub fn set_of(&self, i: usize) -> usize {
        self.set_of[i] as usize
    }

    pub fn mask(&self, filter: &AccessFilter) -> AuthMask<'_> {
        AuthMask { acl: self, allowed_sets: self.sets.iter().map(|s| filter.authorizes(s)).collect() }
    }
}

/// Per-query authorization decisions.
#[derive(Debug, Clone)]
pub struct AuthMask<'a> {
    acl: &'a AclTable,
    allowed_sets: Vec<bool>,
}

impl AuthMask<'_> {
    pub fn allows(&self, chunk_idx: usize) -> bool {
        self.allowed_sets[self.acl.set_of(chunk_idx)]
    }

    pub fn allows_set(&self, set_idx: usize) -> bool {
        self.allowed_sets[set_idx]
    }

    pub fn none_allowed(&self) -> bool {
        !self.allowed_sets.iter().any(|a| *a)
    }
}
