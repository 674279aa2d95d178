//! Precision, recall, F1 and per-type recall.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{CloneType, PairDataset};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Zero denominators give 0 and push a warning.
    pub fn prf(&self, warnings: &mut Vec<String>, context: &str) -> Prf {
        let ratio = |num: u64, den: u64, what: &str, warnings: &mut Vec<String>| {
            if den == 0 {
                warnings.push(format!("{context}: {what} has a zero denominator, reported as 0"));
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let p = ratio(self.tp, self.tp + self.fp, "precision", warnings);
        let r = ratio(self.tp, self.tp + self.fn_, "recall", warnings);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { p, r, f1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TypeRecall {
    pub tp: u64,
    pub total: u64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub p: f64,
    pub r: f64,
    pub f1: f64,
    pub confusion: Confusion,
}

/// `overall` pools the confusion counts of all folds; `mean` averages the
/// per-fold values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: Prf,
    pub mean: Prf,
    pub confusion: Confusion,
    pub per_type: BTreeMap<CloneType, TypeRecall>,
    pub folds: Vec<FoldMetrics>,
    pub warnings: Vec<String>,
}

/// Predictions of one fold: (pair index, predicted clone).
pub type FoldPredictions = Vec<(usize, bool)>;

pub fn confusion(dataset: &PairDataset, predictions: &[(usize, bool)]) -> Confusion {
    let mut c = Confusion::default();
    for &(p, predicted) in predictions {
        match (dataset.pairs[p].is_clone(), predicted) {
            (true, true) => c.tp += 1,
            (false, true) => c.fp += 1,
            (true, false) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

pub fn build_report(dataset: &PairDataset, folds: &[FoldPredictions]) -> MetricsReport {
    let mut warnings = Vec::new();
    let mut total = Confusion::default();
    let mut per_type: BTreeMap<CloneType, TypeRecall> = BTreeMap::new();
    let mut fold_metrics = Vec::with_capacity(folds.len());
    for (f, preds) in folds.iter().enumerate() {
        let c = confusion(dataset, preds);
        let prf = c.prf(&mut warnings, &format!("fold {f}"));
        fold_metrics.push(FoldMetrics {
            fold: f,
            p: prf.p,
            r: prf.r,
            f1: prf.f1,
            confusion: c,
        });
        total.add(&c);
        for &(p, predicted) in preds {
            let pair = &dataset.pairs[p];
            if pair.is_clone() {
                let e = per_type.entry(pair.clone_type).or_default();
                e.total += 1;
                e.tp += u64::from(predicted);
            }
        }
    }
    for e in per_type.values_mut() {
        e.recall = e.tp as f64 / e.total as f64;
    }
    let overall = total.prf(&mut warnings, "overall");
    let n = fold_metrics.len().max(1) as f64;
    let mean = Prf {
        p: fold_metrics.iter().map(|m| m.p).sum::<f64>() / n,
        r: fold_metrics.iter().map(|m| m.r).sum::<f64>() / n,
        f1: fold_metrics.iter().map(|m| m.f1).sum::<f64>() / n,
    };
    MetricsReport {
        overall,
        mean,
        confusion: total,
        per_type,
        folds: fold_metrics,
        warnings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_denominators_warn() {
        let mut w = Vec::new();
        let prf = Confusion::default().prf(&mut w, "x");
        assert_eq!(prf, Prf::default());
        assert_eq!(w.len(), 2);
    }

    #[test]
    fn f1_identity() {
        let c = Confusion { tp: 7, fp: 3, fn_: 2, tn: 10 };
        let prf = c.prf(&mut Vec::new(), "x");
        assert_eq!(prf.p, 0.7);
        assert_eq!(prf.r, 7.0 / 9.0);
        assert!((prf.f1 - 2.0 * prf.p * prf.r / (prf.p + prf.r)).abs() < 1e-15);
    }
}
