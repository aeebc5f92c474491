//! Confusion-matrix rates, fold aggregation and ROC/AUC.

use alloc::vec::Vec;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::model::SeverityGrade;

/// Counts indexed `[true][predicted]` by grade index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: SeverityGrade, predicted: SeverityGrade) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    /// Per-class one-vs-rest rates as fractions.
    pub fn class_rates(&self, class: usize) -> ClassRates {
        let tp = self.counts[class][class] as f64;
        let fn_ = self.support(class) as f64 - tp;
        let fp = self.predicted(class) as f64 - tp;
        let tn = self.total() as f64 - tp - fn_ - fp;
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        let sensitivity = ratio(tp, tp + fn_);
        let precision = ratio(tp, tp + fp);
        ClassRates {
            sensitivity,
            specificity: ratio(tn, tn + fp),
            precision,
            f1: ratio(2.0 * precision * sensitivity, precision + sensitivity),
        }
    }

    /// Accuracy and macro-averaged rates in percent. Classes that neither
    /// occur nor are predicted are left out of the average.
    pub fn rates(&self) -> Rates {
        let total = self.total();
        if total == 0 {
            return Rates::default();
        }
        let active: Vec<usize> = (0..4).filter(|&c| self.support(c) + self.predicted(c) > 0).collect();
        let k = active.len() as f64;
        let mut r = Rates { accuracy: 100.0 * self.correct() as f64 / total as f64, ..Rates::default() };
        for &c in &active {
            let cr = self.class_rates(c);
            r.sensitivity += 100.0 * cr.sensitivity / k;
            r.specificity += 100.0 * cr.specificity / k;
            r.precision += 100.0 * cr.precision / k;
            r.f1 += 100.0 * cr.f1 / k;
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassRates {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        let n = values.len();
        if n == 0 {
            return MeanStd::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanStd { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub folds: usize,
    pub accuracy: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub precision: MeanStd,
    pub f1: MeanStd,
    /// Rates of the confusion matrix pooled over folds.
    pub pooled: Rates,
    pub confusion: ConfusionMatrix,
    /// Absent one-vs-rest AUC over pooled scores.
    pub auc: Option<f64>,
    pub per_class_auc: [Option<f64>; 4],
    /// Absent one-vs-rest ROC as `(fpr, tpr)`.
    pub roc_points: Vec<(f64, f64)>,
}

impl MetricsReport {
    /// `scored` holds `(truth, per-class scores)` for every held-out row.
    pub fn from_folds(folds: &[ConfusionMatrix], scored: &[(SeverityGrade, [f64; 4])]) -> MetricsReport {
        let rates: Vec<Rates> = folds.iter().map(ConfusionMatrix::rates).collect();
        let col = |f: fn(&Rates) -> f64| MeanStd::of(&rates.iter().map(f).collect::<Vec<_>>());
        let mut confusion = ConfusionMatrix::default();
        folds.iter().for_each(|f| confusion.merge(f));

        let per_class_roc: Vec<Option<Vec<(f64, f64)>>> = (0..4)
            .map(|c| {
                let scores: Vec<f64> = scored.iter().map(|s| s.1[c]).collect();
                let positive: Vec<bool> = scored.iter().map(|s| s.0.index() == c).collect();
                roc_curve(&scores, &positive)
            })
            .collect();
        let mut per_class_auc = [None; 4];
        for (slot, roc) in per_class_auc.iter_mut().zip(&per_class_roc) {
            *slot = roc.as_deref().map(auc_trapezoid);
        }
        MetricsReport {
            folds: folds.len(),
            accuracy: col(|r| r.accuracy),
            sensitivity: col(|r| r.sensitivity),
            specificity: col(|r| r.specificity),
            precision: col(|r| r.precision),
            f1: col(|r| r.f1),
            pooled: confusion.rates(),
            confusion,
            auc: per_class_auc[0],
            per_class_auc,
            roc_points: per_class_roc.into_iter().next().flatten().unwrap_or_default(),
        }
    }
}

/// ROC points from (0,0) to (1,1), one per distinct score threshold taken
/// in descending order. `None` without both positives and negatives.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Option<Vec<(f64, f64)>> {
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = Vec::with_capacity(idx.len() + 1);
    pts.push((0.0, 0.0));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if positive[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / n as f64, tp as f64 / p as f64));
    }
    Some(pts)
}

pub fn auc_trapezoid(points: &[(f64, f64)]) -> f64 {
    points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}
