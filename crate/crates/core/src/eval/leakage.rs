use serde::{Deserialize, Serialize};

use super::ScoreReport;

/// Recall and IDK counts on the full test set and on its missing-context
/// variant. A model that answers from context, rather than from memorized
/// training answers, shows a large positive `recall_gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub full_recall: f64,
    pub missing_context_recall: f64,
    /// `full_recall - missing_context_recall`.
    pub recall_gap: f64,
    pub full_idk: usize,
    pub missing_context_idk: usize,
    pub full_n: usize,
    pub missing_context_n: usize,
}

pub fn leakage_report(full: &ScoreReport, missing_context: &ScoreReport) -> LeakageReport {
    LeakageReport {
        full_recall: full.mean_recall,
        missing_context_recall: missing_context.mean_recall,
        recall_gap: full.mean_recall - missing_context.mean_recall,
        full_idk: full.idk_count,
        missing_context_idk: missing_context.idk_count,
        full_n: full.n,
        missing_context_n: missing_context.n,
    }
}

impl LeakageReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<18} {:>8} {:>6} {:>6}\n", "Test set", "Recall", "#IDK", "N");
        s += &format!("{:<18} {:>7.2}% {:>6} {:>6}\n", "full", self.full_recall * 100.0, self.full_idk, self.full_n);
        s += &format!(
            "{:<18} {:>7.2}% {:>6} {:>6}\n",
            "missing context",
            self.missing_context_recall * 100.0,
            self.missing_context_idk,
            self.missing_context_n
        );
        s += &format!("{:<18} {:>7.2}pp\n", "recall gap", self.recall_gap * 100.0);
        s
    }
}
