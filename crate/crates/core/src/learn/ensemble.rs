//! AdaBoost.M2 and bagged random-subspace forests over CART trees.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{argmax, train_tree, TrainSet, Tree, TreeParams};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::model::SeverityGrade;
use crate::rng::{rng_for, tag};

const BETA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleMethod {
    AdaBoostM2,
    Bag,
}

/// One boosting round as recorded during training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostStep {
    pub pseudo_loss: f64,
    pub learner_weight: f64,
    /// Sum of the pair distribution after the update.
    pub distribution_sum: f64,
    /// The tree was fit on a weighted bootstrap draw instead of weights.
    pub resampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub method: EnsembleMethod,
    pub learners: Vec<Tree>,
    /// Per-learner vote weights; all ones for bagging.
    pub learner_weights: Vec<f64>,
    pub n_cycles: usize,
    pub learn_rate: f64,
    pub tree: TreeParams,
    pub classes: Vec<SeverityGrade>,
    pub seed: u64,
    pub trace: Vec<BoostStep>,
    pub warnings: Vec<String>,
}

fn present_classes(m: &FeatureMatrix) -> Result<Vec<usize>> {
    let counts = m.class_counts();
    let classes: Vec<usize> = (0..4).filter(|&c| counts[c] > 0).collect();
    if classes.len() < 2 {
        return Err(Error::Training(format!("need at least two classes, found {}", classes.len())));
    }
    Ok(classes)
}

/// AdaBoost.M2: a distribution over (row, wrong label) pairs, trees fit to
/// its row marginals, learner weight `lr ln(1/beta)` with `beta` floored at
/// 1e-10, and pair weights multiplied by `beta^(lr (1 + h_true - h_wrong) / 2)`.
/// Training stops at the first learner with pseudo-loss >= 0.5. After a
/// perfect learner the distribution no longer moves, so later trees are
/// fit to weighted bootstrap draws of it.
pub fn train_adaboost_m2(
    m: &FeatureMatrix,
    cycles: usize,
    learn_rate: f64,
    tree: &TreeParams,
    seed: u64,
) -> Result<EnsembleModel> {
    tree.validate()?;
    if cycles == 0 {
        return Err(Error::Parameter("cycles must be at least 1".into()));
    }
    if !(learn_rate > 0.0 && learn_rate <= 1.0) {
        return Err(Error::Parameter(format!("learn_rate must be in (0, 1], got {learn_rate}")));
    }
    let classes = present_classes(m)?;
    let set = TrainSet::new(m);
    let n = set.n_rows();
    let k = classes.len();
    // dist[i * 4 + c] for every wrong class c of row i.
    let mut dist = vec![0.0; n * 4];
    let init = 1.0 / (n * (k - 1)) as f64;
    for i in 0..n {
        for &c in &classes {
            if c != set.label(i) {
                dist[i * 4 + c] = init;
            }
        }
    }
    let mut learners = Vec::new();
    let mut learner_weights = Vec::new();
    let mut trace = Vec::new();
    let mut resample = false;
    for t in 0..cycles {
        let mut w: Vec<f64> = (0..n).map(|i| dist[i * 4..i * 4 + 4].iter().sum()).collect();
        if resample {
            let mut rng = rng_for(seed, &[tag::BOOTSTRAP, t as u64]);
            let pick = WeightedIndex::new(&w).map_err(|e| Error::Training(format!("{e}")))?;
            let mut counts = vec![0.0; n];
            for _ in 0..n {
                counts[pick.sample(&mut rng)] += 1.0;
            }
            w = counts;
        }
        let mut rng = rng_for(seed, &[tag::TREE, t as u64]);
        let h = train_tree(&set, &w, tree, &mut rng)?;
        let post: Vec<[f64; 4]> = (0..n).map(|i| *h.posterior(set.row(i))).collect();
        let mut eps = 0.0;
        for i in 0..n {
            let y = set.label(i);
            for &c in &classes {
                if c != y {
                    eps += dist[i * 4 + c] * (1.0 - post[i][y] + post[i][c]);
                }
            }
        }
        eps *= 0.5;
        if eps >= 0.5 {
            if learners.is_empty() {
                // Keep a lone learner so the model can still predict.
                learners.push(h);
                learner_weights.push(1.0);
                trace.push(BoostStep {
                    pseudo_loss: eps,
                    learner_weight: 1.0,
                    distribution_sum: 1.0,
                    resampled: resample,
                });
            }
            break;
        }
        let beta = (eps / (1.0 - eps)).max(BETA_FLOOR);
        let alpha = learn_rate * (1.0 / beta).ln();
        for i in 0..n {
            let y = set.label(i);
            for &c in &classes {
                if c != y {
                    dist[i * 4 + c] *= beta.powf(learn_rate * 0.5 * (1.0 + post[i][y] - post[i][c]));
                }
            }
        }
        let z: f64 = dist.iter().sum();
        dist.iter_mut().for_each(|d| *d /= z);
        let distribution_sum = dist.iter().sum();
        trace.push(BoostStep { pseudo_loss: eps, learner_weight: alpha, distribution_sum, resampled: resample });
        learners.push(h);
        learner_weights.push(alpha);
        if eps == 0.0 {
            resample = true;
        }
    }
    Ok(EnsembleModel {
        method: EnsembleMethod::AdaBoostM2,
        learners,
        learner_weights,
        n_cycles: cycles,
        learn_rate,
        tree: tree.clone(),
        classes: classes.iter().map(|&c| SeverityGrade::ALL[c]).collect(),
        seed,
        trace,
        warnings: Vec::new(),
    })
}

/// Bootstrap draw counts for cycle `t` of a bagged model.
pub fn bootstrap_counts(seed: u64, t: usize, n: usize) -> Vec<u32> {
    let mut rng = rng_for(seed, &[tag::BOOTSTRAP, t as u64]);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    counts
}

/// Bagging: each tree fit to a bootstrap resample with a random feature
/// subset of `vars_per_split` at every split.
pub fn train_bagged_forest(
    m: &FeatureMatrix,
    cycles: usize,
    learn_rate: f64,
    tree: &TreeParams,
    seed: u64,
) -> Result<EnsembleModel> {
    tree.validate()?;
    if cycles == 0 {
        return Err(Error::Parameter("cycles must be at least 1".into()));
    }
    let classes = present_classes(m)?;
    let mut params = tree.clone();
    let mut warnings = Vec::new();
    if let Some(v) = params.vars_per_split {
        if v > m.n_cols() {
            let msg = format!("vars_per_split {v} exceeds {} features; clamped", m.n_cols());
            log::warn!("{msg}");
            warnings.push(msg);
            params.vars_per_split = Some(m.n_cols());
        }
    }
    let set = TrainSet::new(m);
    let n = set.n_rows();
    let mut learners = Vec::with_capacity(cycles);
    for t in 0..cycles {
        let w: Vec<f64> = bootstrap_counts(seed, t, n).into_iter().map(f64::from).collect();
        let mut rng = rng_for(seed, &[tag::TREE, t as u64]);
        learners.push(train_tree(&set, &w, &params, &mut rng)?);
    }
    Ok(EnsembleModel {
        method: EnsembleMethod::Bag,
        learners,
        learner_weights: vec![1.0; cycles],
        n_cycles: cycles,
        learn_rate,
        tree: params,
        classes: classes.iter().map(|&c| SeverityGrade::ALL[c]).collect(),
        seed,
        trace: Vec::new(),
        warnings,
    })
}

impl EnsembleModel {
    /// Per-class scores summing to 1. Boosting: weighted mean posterior.
    /// Bagging: votes plus half the mean posterior as a tie-break, over
    /// `T + 0.5`.
    pub fn scores(&self, row: &[f64]) -> [f64; 4] {
        let mut s = [0.0; 4];
        match self.method {
            EnsembleMethod::AdaBoostM2 => {
                for (t, a) in self.learners.iter().zip(&self.learner_weights) {
                    let p = t.posterior(row);
                    for c in 0..4 {
                        s[c] += a * p[c];
                    }
                }
            }
            EnsembleMethod::Bag => {
                let nt = self.learners.len() as f64;
                for t in &self.learners {
                    let p = t.posterior(row);
                    s[argmax(p)] += 1.0;
                    for c in 0..4 {
                        s[c] += 0.5 * p[c] / nt;
                    }
                }
            }
        }
        let total: f64 = s.iter().sum();
        if total > 0.0 {
            s.iter_mut().for_each(|v| *v /= total);
        }
        s
    }

    /// Out-of-bag predictions of a bagged model on its own training matrix:
    /// `None` for rows drawn into every bootstrap sample.
    pub fn oob_predictions(&self, m: &FeatureMatrix) -> Result<Vec<Option<SeverityGrade>>> {
        if self.method != EnsembleMethod::Bag {
            return Err(Error::Prediction("out-of-bag predictions need a bagged model".into()));
        }
        let n = m.n_rows();
        let mut votes = vec![[0.0; 4]; n];
        let mut post = vec![[0.0; 4]; n];
        let mut seen = vec![0usize; n];
        for (t, tree) in self.learners.iter().enumerate() {
            let counts = bootstrap_counts(self.seed, t, n);
            for i in (0..n).filter(|&i| counts[i] == 0) {
                let p = tree.posterior(m.row(i));
                votes[i][argmax(p)] += 1.0;
                for c in 0..4 {
                    post[i][c] += p[c];
                }
                seen[i] += 1;
            }
        }
        Ok((0..n)
            .map(|i| {
                (seen[i] > 0).then(|| {
                    let mut s = [0.0; 4];
                    for c in 0..4 {
                        s[c] = votes[i][c] + 0.5 * post[i][c] / seen[i] as f64;
                    }
                    SeverityGrade::ALL[argmax(&s)]
                })
            })
            .collect())
    }
}
