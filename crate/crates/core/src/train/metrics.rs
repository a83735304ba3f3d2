use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Binary confusion counts and the metrics derived from them. A metric whose
/// denominator is zero is reported as 0 and listed in `undefined`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub acc: f64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub fpr: f64,
    pub undefined: Vec<String>,
}

fn ratio(num: usize, den: usize, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_owned());
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalMetrics {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> Self {
        let mut undefined = Vec::new();
        let acc = ratio(tp + tn, tp + tn + fp + fn_, "acc", &mut undefined);
        let recall = ratio(tp, tp + fn_, "recall", &mut undefined);
        let precision = ratio(tp, tp + fp, "precision", &mut undefined);
        let f1 = if precision + recall == 0.0 {
            undefined.push("f1".to_owned());
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let fpr = ratio(fp, fp + tn, "fpr", &mut undefined);
        EvalMetrics { tp, fp, tn, fn_, acc, recall, precision, f1, fpr, undefined }
    }

    /// Counts `(predicted, actual)` pairs, one per graph.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for (predicted, actual) in pairs {
            match (predicted, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        EvalMetrics::from_counts(tp, fp, tn, fn_)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// One row of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub metrics: EvalMetrics,
}

/// Tab-separated history table with a header line.
pub fn history_table(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch\ttrain_loss\tval_loss\tacc\trecall\tprecision\tf1\tfpr\n");
    for r in history {
        let m = &r.metrics;
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.epoch, r.train_loss, r.val_loss, m.acc, m.recall, m.precision, m.f1, m.fpr
        );
    }
    out
}
