use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::RaftError;
use crate::corpus::Category;
use crate::synth::QaPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySplit {
    pub total: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan<K: Ord> {
    pub categories: BTreeMap<K, CategorySplit>,
}

impl<K: Ord> SplitPlan<K> {
    pub fn total_test(&self) -> usize {
        self.categories.values().map(|c| c.test).sum()
    }

    pub fn total_train(&self) -> usize {
        self.categories.values().map(|c| c.train).sum()
    }

    pub fn test_of(&self, key: &K) -> Option<usize> {
        self.categories.get(key).map(|c| c.test)
    }
}

// Guards `floor` against products such as 0.29 * 100 = 28.999999999999996.
const FLOOR_EPS: f64 = 1e-9;

/// Stratified test-set sizes per category.
///
/// The test total is `round(test_fraction * total)`. Each category first
/// gets `floor(count * test_fraction)`; leftover slots go to the largest
/// fractional remainders (ties to the smaller key). A non-empty category
/// left with no test example then takes one from the category with the
/// smallest remainder among those holding more than one, so the total is
/// unchanged.
pub fn apportion_split<K: Ord + Clone + std::fmt::Debug>(
    counts: &BTreeMap<K, usize>,
    test_fraction: f64,
    total: usize,
) -> Result<SplitPlan<K>, RaftError> {
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(RaftError::InvalidSplit(format!("test fraction must lie in [0, 1], got {test_fraction}")));
    }
    let sum: usize = counts.values().sum();
    if sum != total {
        return Err(RaftError::InvalidSplit(format!("category counts sum to {sum}, expected {total}")));
    }
    let target = (test_fraction * total as f64).round() as usize;
    let non_empty = counts.values().filter(|c| **c > 0).count();
    if target < non_empty {
        return Err(RaftError::Infeasible(format!("{target} test examples for {non_empty} non-empty categories")));
    }

    struct Slot<K> {
        key: K,
        count: usize,
        test: usize,
        remainder: f64,
    }
    let mut slots: Vec<Slot<K>> = counts
        .iter()
        .map(|(k, &count)| {
            let quota = count as f64 * test_fraction;
            let floor = ((quota + FLOOR_EPS).floor() as usize).min(count);
            Slot { key: k.clone(), count, test: floor, remainder: (quota - floor as f64).max(0.0) }
        })
        .collect();

    let assigned: usize = slots.iter().map(|s| s.test).sum();
    let mut by_remainder: Vec<usize> = (0..slots.len()).collect();
    by_remainder.sort_by(|&a, &b| slots[b].remainder.total_cmp(&slots[a].remainder).then(a.cmp(&b)));
    let mut leftover = target.saturating_sub(assigned);
    for &i in by_remainder.iter().cycle().take(by_remainder.len() * 2) {
        if leftover == 0 {
            break;
        }
        if slots[i].test < slots[i].count {
            slots[i].test += 1;
            leftover -= 1;
        }
    }

    for i in 0..slots.len() {
        if slots[i].count == 0 || slots[i].test > 0 {
            continue;
        }
        let donor = (0..slots.len())
            .filter(|&j| slots[j].test > 1)
            .min_by(|&a, &b| slots[a].remainder.total_cmp(&slots[b].remainder).then(a.cmp(&b)))
            .ok_or_else(|| {
                RaftError::Infeasible(format!("no category can spare a test example for {:?}", slots[i].key))
            })?;
        slots[donor].test -= 1;
        slots[i].test = 1;
    }

    Ok(SplitPlan {
        categories: slots
            .into_iter()
            .map(|s| (s.key, CategorySplit { total: s.count, train: s.count - s.test, test: s.test }))
            .collect(),
    })
}

/// Splits synthetic pairs into train and test per the apportioned plan.
///
/// The unit of assignment is the source document, so no document feeds both
/// sides. A document's category is that of its first pair; pairs without
/// a category count as [`Category::Other`]. Within a
/// category, units are shuffled with a seeded RNG and the first ones go to
/// test. Both outputs are sorted by `qa_id`.
pub fn assign_splits(
    pairs: Vec<QaPair>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<QaPair>, Vec<QaPair>, SplitPlan<Category>), RaftError> {
    let unit_of = |p: &QaPair| p.source_doc_id.clone().unwrap_or_else(|| p.qa_id.clone());
    let mut by_doc: BTreeMap<String, Vec<QaPair>> = BTreeMap::new();
    for p in pairs {
        by_doc.entry(unit_of(&p)).or_default().push(p);
    }
    let mut units: BTreeMap<Category, BTreeMap<String, Vec<QaPair>>> = BTreeMap::new();
    for (doc, group) in by_doc {
        units.entry(group[0].category.unwrap_or(Category::Other)).or_default().insert(doc, group);
    }
    let counts: BTreeMap<Category, usize> = units.iter().map(|(c, u)| (*c, u.len())).collect();
    let plan = apportion_split(&counts, test_fraction, counts.values().sum())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (category, by_unit) in units {
        let n_test = plan.test_of(&category).unwrap_or(0);
        let mut groups: Vec<Vec<QaPair>> = by_unit.into_values().collect();
        groups.shuffle(&mut rng);
        for (i, g) in groups.into_iter().enumerate() {
            if i < n_test {
                test.extend(g)
            } else {
                train.extend(g)
            }
        }
    }
    train.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    test.sort_by(|a, b| a.qa_id.cmp(&b.qa_id));
    Ok((train, test, plan))
}
