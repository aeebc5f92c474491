//! Stratified k-fold cross-validation with optional SMOTE balancing.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, MetricsReport};
use super::smote::smote_balance;
use super::{predict, train, TrainedModel, TrainerSpec};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::model::SeverityGrade;
use crate::rng::{derive_seed, rng_for, tag};

/// Where SMOTE runs relative to the fold split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmotePlacement {
    Off,
    /// Balance each training split only; held-out rows stay real.
    #[default]
    InsideFolds,
    /// Balance the whole matrix, then split. Synthetic neighbours of
    /// training rows end up in test folds, which inflates accuracy.
    BeforeCv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub seed: u64,
    pub smote: SmotePlacement,
    pub smote_k: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 10, seed: 0, smote: SmotePlacement::InsideFolds, smote_k: 5 }
    }
}

/// Fold index per row. Rows are taken in row-key order, shuffled within
/// each class, and dealt round-robin continuing across classes, so every
/// fold's class count is within one of its proportional share.
pub fn stratified_kfold(labels: &[SeverityGrade], keys: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(crate::error::Error::Parameter("need at least 2 folds".into()));
    }
    if labels.len() != keys.len() {
        return Err(Error::InvalidInput("labels and keys differ in length".into()));
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    let mut folds = vec![0; labels.len()];
    let mut offset = 0;
    for grade in SeverityGrade::ALL {
        let mut rows: Vec<usize> = order.iter().copied().filter(|&r| labels[r] == grade).collect();
        if rows.is_empty() {
            continue;
        }
        if rows.len() < k {
            return Err(Error::Stratification { class: grade, count: rows.len(), k });
        }
        rows.shuffle(&mut rng_for(seed, &[tag::FOLDS, grade.index() as u64]));
        for (i, r) in rows.iter().enumerate() {
            folds[*r] = (offset + i) % k;
        }
        offset += rows.len();
    }
    Ok(folds)
}

/// Everything fixed before folds are trained: the (possibly pre-balanced)
/// matrix in row-key order and each row's fold.
#[derive(Debug, Clone)]
pub struct CvPlan {
    pub matrix: FeatureMatrix,
    pub folds: Vec<usize>,
    pub config: CvConfig,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub confusion: ConfusionMatrix,
    pub scored: Vec<(SeverityGrade, [f64; 4])>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub warnings: Vec<String>,
}

pub fn plan_cv(m: &FeatureMatrix, cfg: &CvConfig) -> Result<CvPlan> {
    let mut order: Vec<usize> = (0..m.n_rows()).collect();
    order.sort_by(|&a, &b| m.row_keys()[a].cmp(&m.row_keys()[b]).then(a.cmp(&b)));
    let mut matrix = m.select_rows(&order);
    let mut warnings = Vec::new();
    if cfg.smote == SmotePlacement::BeforeCv {
        let b = smote_balance(&matrix, cfg.smote_k, derive_seed(cfg.seed, &[tag::SMOTE, u64::MAX]))?;
        warnings.extend(b.warnings);
        matrix = b.matrix;
    }
    let folds = stratified_kfold(matrix.labels(), matrix.row_keys(), cfg.folds, cfg.seed)?;
    Ok(CvPlan { matrix, folds, config: cfg.clone(), warnings })
}

pub fn run_fold(plan: &CvPlan, fold: usize, spec: &TrainerSpec) -> Result<FoldResult> {
    let (train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..plan.matrix.n_rows()).partition(|&r| plan.folds[r] != fold);
    let mut train_m = plan.matrix.select_rows(&train_rows);
    let test_m = plan.matrix.select_rows(&test_rows);
    let mut warnings = Vec::new();
    if plan.config.smote == SmotePlacement::InsideFolds {
        let b =
            smote_balance(&train_m, plan.config.smote_k, derive_seed(plan.config.seed, &[tag::SMOTE, fold as u64]))?;
        warnings.extend(b.warnings);
        train_m = b.matrix;
    }
    let model = train(spec, &train_m, derive_seed(plan.config.seed, &[tag::TRAIN, fold as u64]))?;
    let preds = predict(&model, &test_m)?;
    let mut confusion = ConfusionMatrix::default();
    let mut scored = Vec::with_capacity(preds.len());
    for (p, &truth) in preds.iter().zip(test_m.labels()) {
        confusion.add(truth, p.class);
        scored.push((truth, p.scores));
    }
    Ok(FoldResult { confusion, scored, warnings })
}

/// Combines fold results given in fold order.
pub fn assemble_cv(plan: &CvPlan, results: Vec<FoldResult>) -> CvOutcome {
    let mut warnings = plan.warnings.clone();
    let mut folds = Vec::with_capacity(results.len());
    let mut scored = Vec::new();
    for r in results {
        folds.push(r.confusion);
        scored.extend(r.scored);
        warnings.extend(r.warnings);
    }
    CvOutcome { report: MetricsReport::from_folds(&folds, &scored), warnings }
}

pub fn evaluate_cv(m: &FeatureMatrix, spec: &TrainerSpec, cfg: &CvConfig) -> Result<CvOutcome> {
    let plan = plan_cv(m, cfg)?;
    let results = (0..cfg.folds).map(|f| run_fold(&plan, f, spec)).collect::<Result<Vec<_>>>()?;
    Ok(assemble_cv(&plan, results))
}

/// Fits the deployable model on every row, balanced with SMOTE unless the
/// placement is `Off`. Returns the model and any balancing warnings.
pub fn train_final(m: &FeatureMatrix, spec: &TrainerSpec, cfg: &CvConfig) -> Result<(TrainedModel, Vec<String>)> {
    let mut order: Vec<usize> = (0..m.n_rows()).collect();
    order.sort_by(|&a, &b| m.row_keys()[a].cmp(&m.row_keys()[b]).then(a.cmp(&b)));
    let mut matrix = m.select_rows(&order);
    let mut warnings = Vec::new();
    if cfg.smote != SmotePlacement::Off {
        let b = smote_balance(&matrix, cfg.smote_k, derive_seed(cfg.seed, &[tag::SMOTE, u64::MAX]))?;
        warnings = b.warnings;
        matrix = b.matrix;
    }
    let model = train(spec, &matrix, derive_seed(cfg.seed, &[tag::TRAIN, u64::MAX]))?;
    Ok((model, warnings))
}
