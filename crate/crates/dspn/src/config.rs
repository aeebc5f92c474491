//! TOML run configuration.
//!
//! ```toml
//! seed = 7                      # required
//! dataset = "data/manifest.json"
//! scheme = "synthetic-truth"
//! family = "EMG"                # optional; checked against channels
//! channels = ["GM", "TA", "VL"]
//! output = "out/emg"
//! overrides = "reviewed.csv"    # optional segments-format file
//! write_envelopes = false
//! incremental_search = true
//! max_k = 20                    # optional cap on the search
//! profile_len = 1000
//!
//! [learner]                     # defaults to the family's tuned ensemble
//! method = "adaboost_m2"
//! cycles = 305
//! learn_rate = 0.96
//! max_splits = 71
//!
//! [cv]
//! folds = 10
//! smote = "inside_folds"        # off | inside_folds | before_cv
//! smote_k = 5
//! ```
//!
//! `[preprocess]`, `[change_point]`, `[burst]`, `[features]` and
//! `[selection]` accept the fields of the matching library configs.
//! Relative paths resolve against the configuration file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dspn_core::dsp::PreprocessConfig;
use dspn_core::features::FeatureConfig;
use dspn_core::learn::{CvConfig, SmotePlacement, TrainerSpec};
use dspn_core::model::{combo_family, ChannelFamily, ChannelKind};
use dspn_core::pipeline::SegmentationConfig;
use dspn_core::segmentation::{BurstConfig, ChangePointConfig};
use dspn_core::selection::SelectionConfig;

use crate::error::{DspnError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvParams {
    pub folds: usize,
    pub smote: SmotePlacement,
    pub smote_k: usize,
}

impl Default for CvParams {
    fn default() -> Self {
        let d = CvConfig::default();
        CvParams { folds: d.folds, smote: d.smote, smote_k: d.smote_k }
    }
}

fn yes() -> bool {
    true
}

fn default_profile_len() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: PathBuf,
    pub scheme: String,
    #[serde(default)]
    pub family: Option<String>,
    pub channels: Vec<String>,
    pub output: PathBuf,
    #[serde(default)]
    pub overrides: Option<PathBuf>,
    #[serde(default)]
    pub write_envelopes: bool,
    #[serde(default = "yes")]
    pub incremental_search: bool,
    #[serde(default)]
    pub max_k: Option<usize>,
    #[serde(default = "default_profile_len")]
    pub profile_len: usize,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default)]
    pub change_point: ChangePointConfig,
    #[serde(default)]
    pub burst: BurstConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub learner: Option<TrainerSpec>,
    #[serde(default)]
    pub cv: CvParams,
}

impl RunConfig {
    /// Parses a configuration file and resolves relative paths against
    /// its directory. Semantic checks happen in [`RunConfig::validate`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DspnError::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| DspnError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.dataset = base.join(&cfg.dataset);
        cfg.output = base.join(&cfg.output);
        cfg.overrides = cfg.overrides.map(|o| base.join(o));
        Ok(cfg)
    }

    pub fn combo(&self) -> Result<Vec<ChannelKind>> {
        let combo = self
            .channels
            .iter()
            .map(|c| c.parse::<ChannelKind>())
            .collect::<dspn_core::Result<Vec<_>>>()
            .map_err(|e| DspnError::Config(e.to_string()))?;
        let family = combo_family(&combo).map_err(|e| DspnError::Config(e.to_string()))?;
        if let Some(f) = &self.family {
            let declared: ChannelFamily = f.parse().map_err(|e: dspn_core::Error| DspnError::Config(e.to_string()))?;
            if declared != family {
                return Err(DspnError::Config(format!(
                    "family {declared} does not match channels {}; EMG and GRF channels are never mixed",
                    self.channels.join(", ")
                )));
            }
        }
        for (i, c) in combo.iter().enumerate() {
            if combo[..i].contains(c) {
                return Err(DspnError::Config(format!("channel {c} listed twice")));
            }
        }
        Ok(combo)
    }

    pub fn family(&self) -> Result<ChannelFamily> {
        combo_family(&self.combo()?).map_err(|e| DspnError::Config(e.to_string()))
    }

    /// The configured learner, or the tuned ensemble for the channel family.
    pub fn trainer(&self) -> Result<TrainerSpec> {
        Ok(match &self.learner {
            Some(t) => t.clone(),
            None => match self.family()? {
                ChannelFamily::Emg => TrainerSpec::tuned_emg(),
                ChannelFamily::Grf => TrainerSpec::tuned_grf(),
            },
        })
    }

    pub fn cv_config(&self) -> CvConfig {
        CvConfig { folds: self.cv.folds, seed: self.seed, smote: self.cv.smote, smote_k: self.cv.smote_k }
    }

    pub fn segmentation(&self) -> SegmentationConfig {
        SegmentationConfig {
            preprocess: self.preprocess.clone(),
            change_point: self.change_point.clone(),
            burst: self.burst.clone(),
        }
    }

    /// Every check that can run before the dataset is touched.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: dspn_core::Error| DspnError::Config(e.to_string());
        self.combo()?;
        self.trainer()?.validate().map_err(cfg_err)?;
        self.preprocess.validate().map_err(cfg_err)?;
        self.change_point.validate().map_err(cfg_err)?;
        self.burst.validate().map_err(cfg_err)?;
        self.features.validate().map_err(cfg_err)?;
        self.selection.validate().map_err(cfg_err)?;
        if self.cv.folds < 2 {
            return Err(DspnError::Config("cv.folds must be at least 2".into()));
        }
        if self.cv.smote_k == 0 {
            return Err(DspnError::Config("cv.smote_k must be at least 1".into()));
        }
        if self.max_k == Some(0) {
            return Err(DspnError::Config("max_k must be at least 1".into()));
        }
        if self.profile_len < 2 {
            return Err(DspnError::Config("profile_len must be at least 2".into()));
        }
        if self.scheme.trim().is_empty() {
            return Err(DspnError::Config("scheme must not be empty".into()));
        }
        if !self.dataset.is_file() {
            return Err(DspnError::Config(format!("dataset manifest {} does not exist", self.dataset.display())));
        }
        if let Some(o) = &self.overrides {
            if !o.is_file() {
                return Err(DspnError::Config(format!("overrides file {} does not exist", o.display())));
            }
        }
        Ok(())
    }
}
