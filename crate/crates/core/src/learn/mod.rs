//! Balancing, classifiers, cross-validation and metrics.

pub mod baseline;
pub mod cv;
pub mod ensemble;
pub mod metrics;
pub mod smote;
pub mod tree;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{schema_hash, FeatureMatrix};
use crate::model::SeverityGrade;

pub use baseline::{KnnModel, LdaModel, NaiveBayesModel};
pub use cv::{evaluate_cv, stratified_kfold, train_final, CvConfig, CvOutcome, SmotePlacement};
pub use ensemble::{train_adaboost_m2, train_bagged_forest, EnsembleMethod, EnsembleModel};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use smote::smote_balance;
pub use tree::{train_tree, TrainSet, Tree, TreeParams};

/// What to train, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TrainerSpec {
    AdaboostM2 {
        cycles: usize,
        learn_rate: f64,
        max_splits: usize,
    },
    /// `learn_rate` is recorded for reporting only; bagging has no step size.
    Bag {
        cycles: usize,
        learn_rate: f64,
        max_splits: usize,
        vars_per_split: usize,
    },
    Knn {
        k: usize,
    },
    Lda {
        ridge: f64,
    },
    GaussianNb {
        var_floor: f64,
    },
}

impl TrainerSpec {
    /// AdaBoostM2, 305 cycles, learn rate 0.96, 71 splits.
    pub fn tuned_emg() -> Self {
        TrainerSpec::AdaboostM2 { cycles: 305, learn_rate: 0.96, max_splits: 71 }
    }

    /// Bag, 305 cycles, 430 splits, 5 variables per split.
    pub fn tuned_grf() -> Self {
        TrainerSpec::Bag { cycles: 305, learn_rate: 0.96, max_splits: 430, vars_per_split: 5 }
    }

    /// Checks hyperparameter ranges without training anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match *self {
            TrainerSpec::AdaboostM2 { cycles, learn_rate, max_splits }
            | TrainerSpec::Bag { cycles, learn_rate, max_splits, .. } => {
                if cycles == 0 {
                    return bad(format!("{}: cycles must be at least 1", self.name()));
                }
                if !(learn_rate > 0.0 && learn_rate <= 1.0) {
                    return bad(format!("{}: learn_rate must be in (0, 1], got {learn_rate}", self.name()));
                }
                TreeParams::new(max_splits).validate()?;
                if let TrainerSpec::Bag { vars_per_split: 0, .. } = self {
                    return bad("Bag: vars_per_split must be at least 1".into());
                }
            }
            TrainerSpec::Knn { k: 0 } => return bad("KNN: k must be at least 1".into()),
            TrainerSpec::Lda { ridge } if !(ridge >= 0.0 && ridge.is_finite()) => {
                return bad(format!("LDA: ridge must be non-negative, got {ridge}"))
            }
            TrainerSpec::GaussianNb { var_floor } if !(var_floor > 0.0 && var_floor.is_finite()) => {
                return bad(format!("GaussianNB: var_floor must be positive, got {var_floor}"))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainerSpec::AdaboostM2 { .. } => "AdaBoostM2",
            TrainerSpec::Bag { .. } => "Bag",
            TrainerSpec::Knn { .. } => "KNN",
            TrainerSpec::Lda { .. } => "LDA",
            TrainerSpec::GaussianNb { .. } => "GaussianNB",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classifier {
    Ensemble(EnsembleModel),
    Knn(KnnModel),
    Lda(LdaModel),
    GaussianNb(NaiveBayesModel),
}

/// A trained classifier bound to the column layout it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub columns: Vec<String>,
    pub schema_hash: u64,
    pub classifier: Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: SeverityGrade,
    /// Per-class scores summing to 1, indexed by grade.
    pub scores: [f64; 4],
}

pub fn train(spec: &TrainerSpec, m: &FeatureMatrix, seed: u64) -> Result<TrainedModel> {
    let classifier = match *spec {
        TrainerSpec::AdaboostM2 { cycles, learn_rate, max_splits } => {
            Classifier::Ensemble(train_adaboost_m2(m, cycles, learn_rate, &TreeParams::new(max_splits), seed)?)
        }
        TrainerSpec::Bag { cycles, learn_rate, max_splits, vars_per_split } => {
            let params = TreeParams { vars_per_split: Some(vars_per_split), ..TreeParams::new(max_splits) };
            Classifier::Ensemble(train_bagged_forest(m, cycles, learn_rate, &params, seed)?)
        }
        TrainerSpec::Knn { k } => Classifier::Knn(baseline::train_knn(m, k)?),
        TrainerSpec::Lda { ridge } => Classifier::Lda(baseline::train_lda(m, ridge)?),
        TrainerSpec::GaussianNb { var_floor } => Classifier::GaussianNb(baseline::train_gaussian_nb(m, var_floor)?),
    };
    Ok(TrainedModel { columns: m.columns().to_vec(), schema_hash: m.schema_hash(), classifier })
}

impl TrainedModel {
    fn scores(&self, row: &[f64]) -> [f64; 4] {
        match &self.classifier {
            Classifier::Ensemble(e) => e.scores(row),
            Classifier::Knn(k) => k.scores(row),
            Classifier::Lda(l) => l.scores(row),
            Classifier::GaussianNb(nb) => nb.scores(row),
        }
    }
}

/// Class and normalised scores per row. The matrix must carry the model's
/// exact column layout.
pub fn predict(model: &TrainedModel, m: &FeatureMatrix) -> Result<Vec<Prediction>> {
    if m.schema_hash() != model.schema_hash || schema_hash(&model.columns) != model.schema_hash {
        return Err(Error::Prediction(format!(
            "feature schema mismatch: model expects [{}], got [{}]",
            model.columns.join(", "),
            m.columns().join(", ")
        )));
    }
    Ok((0..m.n_rows())
        .map(|r| {
            let mut scores = model.scores(m.row(r));
            let total: f64 = scores.iter().sum();
            if total > 0.0 {
                scores.iter_mut().for_each(|s| *s /= total);
            }
            Prediction { class: SeverityGrade::ALL[tree::argmax(&scores)], scores }
        })
        .collect())
}
