//! Reference classifiers: k-nearest neighbours, linear discriminant
//! analysis and Gaussian naive Bayes. All three standardise features with
//! training-set statistics first.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(m: &FeatureMatrix) -> Self {
        let n = m.n_rows().max(1) as f64;
        let (mut mean, mut scale) = (Vec::new(), Vec::new());
        for j in 0..m.n_cols() {
            let c = m.column(j);
            let mu = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n).sqrt();
            mean.push(mu);
            scale.push(if sd > 0.0 { sd } else { 1.0 });
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

fn softmax(logits: &[f64; 4], present: &[bool; 4]) -> [f64; 4] {
    let mx = (0..4).filter(|&c| present[c]).map(|c| logits[c]).fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0; 4];
    for c in 0..4 {
        if present[c] {
            s[c] = (logits[c] - mx).exp();
        }
    }
    let t: f64 = s.iter().sum();
    s.iter_mut().for_each(|v| *v /= t);
    s
}

fn present(m: &FeatureMatrix) -> Result<[bool; 4]> {
    let counts = m.class_counts();
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::Training("need at least two classes".into()));
    }
    Ok(core::array::from_fn(|c| counts[c] > 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub std: Standardizer,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

pub fn train_knn(m: &FeatureMatrix, k: usize) -> Result<KnnModel> {
    present(m)?;
    if k == 0 || k > m.n_rows() - 1 {
        return Err(Error::Parameter(format!("KNN k must be in 1..={}, got {k}", m.n_rows() - 1)));
    }
    let std = Standardizer::fit(m);
    let rows = (0..m.n_rows()).map(|r| std.apply(m.row(r))).collect();
    Ok(KnnModel { k, std, rows, labels: m.labels().iter().map(|l| l.index()).collect() })
}

impl KnnModel {
    /// Fraction of the `k` nearest training rows in each class; distance
    /// ties keep training order.
    pub fn scores(&self, row: &[f64]) -> [f64; 4] {
        let z = self.std.apply(row);
        let mut d: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(&z).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut s = [0.0; 4];
        for &(_, i) in d.iter().take(self.k) {
            s[self.labels[i]] += 1.0 / self.k as f64;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub std: Standardizer,
    pub present: [bool; 4],
    /// Per class: `Sigma^-1 mu_c`.
    pub coef: Vec<Vec<f64>>,
    /// Per class: `-mu_c' Sigma^-1 mu_c / 2 + ln prior_c`.
    pub intercept: [f64; 4],
}

/// LDA with pooled covariance plus `ridge * I` on standardised features.
pub fn train_lda(m: &FeatureMatrix, ridge: f64) -> Result<LdaModel> {
    let present = present(m)?;
    let std = Standardizer::fit(m);
    let p = m.n_cols();
    let n = m.n_rows();
    let z: Vec<Vec<f64>> = (0..n).map(|r| std.apply(m.row(r))).collect();
    let counts = m.class_counts();
    let mut means = vec![vec![0.0; p]; 4];
    for (r, row) in z.iter().enumerate() {
        let c = m.labels()[r].index();
        for (a, v) in means[c].iter_mut().zip(row) {
            *a += v / counts[c] as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for (r, row) in z.iter().enumerate() {
        let c = m.labels()[r].index();
        let d = DVector::from_iterator(p, row.iter().zip(&means[c]).map(|(a, b)| a - b));
        cov += &d * d.transpose();
    }
    let dof = (n - present.iter().filter(|&&b| b).count()).max(1) as f64;
    cov /= dof;
    for i in 0..p {
        cov[(i, i)] += ridge;
    }
    let chol =
        cov.cholesky().ok_or_else(|| Error::Training("pooled covariance is singular even after ridge".into()))?;
    let mut coef = vec![vec![0.0; p]; 4];
    let mut intercept = [f64::NEG_INFINITY; 4];
    for c in (0..4).filter(|&c| present[c]) {
        let mu = DVector::from_column_slice(&means[c]);
        let w = chol.solve(&mu);
        intercept[c] = -0.5 * mu.dot(&w) + (counts[c] as f64 / n as f64).ln();
        coef[c] = w.iter().copied().collect();
    }
    Ok(LdaModel { std, present, coef, intercept })
}

impl LdaModel {
    pub fn scores(&self, row: &[f64]) -> [f64; 4] {
        let z = self.std.apply(row);
        let logits: [f64; 4] = core::array::from_fn(|c| {
            if self.present[c] {
                self.coef[c].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + self.intercept[c]
            } else {
                f64::NEG_INFINITY
            }
        });
        softmax(&logits, &self.present)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub std: Standardizer,
    pub present: [bool; 4],
    pub mean: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub log_prior: [f64; 4],
}

/// Gaussian naive Bayes with per-class variances floored at `var_floor`.
pub fn train_gaussian_nb(m: &FeatureMatrix, var_floor: f64) -> Result<NaiveBayesModel> {
    let present = present(m)?;
    let std = Standardizer::fit(m);
    let p = m.n_cols();
    let n = m.n_rows();
    let counts = m.class_counts();
    let z: Vec<Vec<f64>> = (0..n).map(|r| std.apply(m.row(r))).collect();
    let mut mean = vec![vec![0.0; p]; 4];
    let mut var = vec![vec![0.0; p]; 4];
    for (r, row) in z.iter().enumerate() {
        let c = m.labels()[r].index();
        for (a, v) in mean[c].iter_mut().zip(row) {
            *a += v / counts[c] as f64;
        }
    }
    for (r, row) in z.iter().enumerate() {
        let c = m.labels()[r].index();
        for j in 0..p {
            var[c][j] += (row[j] - mean[c][j]).powi(2) / counts[c] as f64;
        }
    }
    var.iter_mut().flatten().for_each(|v| *v = v.max(var_floor));
    let log_prior = core::array::from_fn(|c| if present[c] { (counts[c] as f64 / n as f64).ln() } else { 0.0 });
    Ok(NaiveBayesModel { std, present, mean, var, log_prior })
}

impl NaiveBayesModel {
    pub fn scores(&self, row: &[f64]) -> [f64; 4] {
        let z = self.std.apply(row);
        let logits: [f64; 4] = core::array::from_fn(|c| {
            if !self.present[c] {
                return f64::NEG_INFINITY;
            }
            self.log_prior[c]
                + z.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let s2 = self.var[c][j];
                        -0.5 * ((v - self.mean[c][j]).powi(2) / s2 + s2.ln())
                    })
                    .sum::<f64>()
        });
        softmax(&logits, &self.present)
    }
}
