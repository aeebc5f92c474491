//! Dataset-level glue: preprocessing and segmentation of every trial into
//! the segmented form consumed by feature extraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{preprocess_emg, PreprocessConfig};
use crate::error::{Error, Result};
use crate::features::{ChannelSegments, FeatureConfig, SegmentedTrial};
use crate::model::{combo_family, ChannelFamily, ChannelKind, Dataset, SeverityGrade, Trial};
use crate::segmentation::{
    apply_overrides, detect_emg_bursts, propagate_segment, segment_stance, BurstConfig, ChangePointConfig,
    SegmentOverride,
};
use crate::selection::{assemble_channel_study, ChannelStudy, SelectionConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    pub preprocess: PreprocessConfig,
    pub change_point: ChangePointConfig,
    pub burst: BurstConfig,
}

/// Segments the requested channels of one trial. EMG channels carry the
/// band-passed signal cut at burst onsets; GRF channels carry the raw
/// force cut to the stance found on GRFz.
pub fn segment_trial(
    trial: &Trial,
    label: SeverityGrade,
    combo: &[ChannelKind],
    cfg: &SegmentationConfig,
    overrides: &[SegmentOverride],
) -> Result<(SegmentedTrial, Vec<String>)> {
    let family = combo_family(combo)?;
    let get = |ch: ChannelKind| {
        trial
            .channels
            .get(&ch)
            .ok_or_else(|| Error::InvalidInput(format!("trial {} has no {ch} channel", trial.trial_id)))
    };
    let mut channels = BTreeMap::new();
    let mut warnings = Vec::new();
    match family {
        ChannelFamily::Emg => {
            for &ch in combo {
                let pre = preprocess_emg(get(ch)?, &cfg.preprocess)?;
                let det = detect_emg_bursts(&pre.envelope, ch, &cfg.burst)?;
                let segments = apply_overrides(&trial.trial_id, ch, &det.segments, overrides, pre.filtered.len())?;
                warnings
                    .extend(pre.warnings.into_iter().chain(det.warnings).map(|w| format!("{}: {w}", trial.trial_id)));
                channels.insert(ch, ChannelSegments { samples: pre.filtered.into_samples(), segments });
            }
        }
        ChannelFamily::Grf => {
            let z = get(ChannelKind::GrfZ)?;
            let stance = segment_stance(z, &cfg.change_point)?;
            let targets = combo.iter().map(|&ch| Ok((ch, get(ch)?))).collect::<Result<Vec<_>>>()?;
            let propagated = propagate_segment(&stance, z, &targets)?;
            for (&ch, seg) in combo.iter().zip(propagated) {
                let trace = get(ch)?;
                let segments = apply_overrides(&trial.trial_id, ch, &[seg], overrides, trace.len())?;
                channels.insert(ch, ChannelSegments { samples: trace.samples().to_vec(), segments });
            }
        }
    }
    Ok((SegmentedTrial { trial_id: trial.trial_id.clone(), label, channels }, warnings))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentedSet {
    pub trials: Vec<SegmentedTrial>,
    /// `(trial_id, reason)` for trials left out.
    pub skipped: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl SegmentedSet {
    /// Merges per-trial outcomes given in dataset order.
    pub fn collect(
        outcomes: impl IntoIterator<Item = (String, Result<Option<(SegmentedTrial, Vec<String>)>>)>,
    ) -> Self {
        let mut set = SegmentedSet::default();
        for (id, r) in outcomes {
            match r {
                Ok(Some((t, w))) => {
                    set.trials.push(t);
                    set.warnings.extend(w);
                }
                Ok(None) => set.skipped.push((id, String::from("no grade under the selected scheme"))),
                Err(e) => {
                    log::warn!("skipping trial {id}: {e}");
                    set.skipped.push((id, format!("{e}")));
                }
            }
        }
        set
    }
}

/// Segments one trial if it is graded under `scheme`; `Ok(None)` otherwise.
pub fn segment_graded(
    trial: &Trial,
    scheme: &str,
    combo: &[ChannelKind],
    cfg: &SegmentationConfig,
    overrides: &[SegmentOverride],
) -> Result<Option<(SegmentedTrial, Vec<String>)>> {
    match trial.grade(scheme) {
        Some(g) => segment_trial(trial, g, combo, cfg, overrides).map(Some),
        None => Ok(None),
    }
}

/// Segments every trial graded under `scheme`. Trials that fail to
/// segment are skipped and listed rather than aborting the run.
pub fn segment_dataset(
    dataset: &Dataset,
    scheme: &str,
    combo: &[ChannelKind],
    cfg: &SegmentationConfig,
    overrides: &[SegmentOverride],
) -> Result<SegmentedSet> {
    combo_family(combo)?;
    if !dataset.meta.schemes.iter().any(|s| s == scheme) {
        return Err(Error::InvalidInput(format!("grading scheme `{scheme}` is not declared by the dataset")));
    }
    Ok(SegmentedSet::collect(
        dataset.trials.iter().map(|t| (t.trial_id.clone(), segment_graded(t, scheme, combo, cfg, overrides))),
    ))
}

/// Segmentation, extraction, pruning and ranking for one combination.
pub fn study_dataset(
    dataset: &Dataset,
    scheme: &str,
    combo: &[ChannelKind],
    seg: &SegmentationConfig,
    features: &FeatureConfig,
    selection: &SelectionConfig,
    overrides: &[SegmentOverride],
) -> Result<(ChannelStudy, SegmentedSet)> {
    let set = segment_dataset(dataset, scheme, combo, seg, overrides)?;
    let study = assemble_channel_study(&set.trials, combo_family(combo)?, combo, features, selection)?;
    Ok((study, set))
}
