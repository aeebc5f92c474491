//! The end-to-end pipeline behind `dspn run`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use dspn_core::dsp::preprocess_emg;
use dspn_core::features::extract_matrix;
use dspn_core::learn::cv::{assemble_cv, plan_cv, run_fold, CvPlan, FoldResult};
use dspn_core::learn::train_final;
use dspn_core::model::{ChannelFamily, ChannelKind, Dataset, SeverityGrade};
use dspn_core::pipeline::{segment_graded, SegmentedSet};
use dspn_core::segmentation::{profiles_from_curves, ProfileSet, SegmentOverride};
use dspn_core::selection::{prune_correlated, relieff_rank, top_k_matrix, SearchEntry, SearchReport};
use dspn_core::Error as CoreError;

use crate::artifacts;
use crate::config::RunConfig;
use crate::error::{DspnError, Result};
use crate::io::{load_dataset, write_signal};
use crate::report::{RunReport, REPORT_SCHEMA_VERSION};

pub const FAILED_MARKER: &str = "FAILED";

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub threads: Option<usize>,
    pub max_k: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.output {
            cfg.output.clone_from(o);
        }
        if let Some(k) = self.max_k {
            cfg.max_k = Some(k);
        }
    }
}

fn stage<T>(name: &'static str, r: dspn_core::Result<T>) -> Result<T> {
    r.map_err(|source| DspnError::Stage { stage: name, source })
}

/// Runs the pipeline and writes every artifact under `cfg.output`. Once the
/// output directory exists, a failure leaves a `FAILED` file naming the
/// error there.
pub fn run(cfg: &RunConfig, threads: Option<usize>) -> Result<RunReport> {
    cfg.validate()?;
    let out = &cfg.output;
    fs::create_dir_all(out).map_err(|e| DspnError::io(out, e))?;
    let marker = out.join(FAILED_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| DspnError::io(&marker, e))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| DspnError::Config(format!("cannot start thread pool: {e}")))?;
    let result = pool.install(|| run_in(cfg));
    if let Err(e) = &result {
        // Best effort: the original error matters more than a failed marker write.
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

fn run_in(cfg: &RunConfig) -> Result<RunReport> {
    let out = &cfg.output;
    let combo = cfg.combo()?;
    let family = cfg.family()?;
    let trainer = cfg.trainer()?;
    let cv = cfg.cv_config();

    let dataset = load_dataset(&cfg.dataset)?;
    if !dataset.meta.schemes.iter().any(|s| s == &cfg.scheme) {
        return Err(DspnError::Config(format!(
            "grading scheme `{}` is not declared by dataset {}",
            cfg.scheme, dataset.meta.name
        )));
    }
    let overrides = match &cfg.overrides {
        Some(p) => artifacts::read_segments(p)?,
        None => Vec::new(),
    };

    let curves = stage("profiles", channel_curves(&dataset, cfg, &combo, family))?;
    if cfg.write_envelopes && family == ChannelFamily::Emg {
        write_envelopes(&out.join("envelopes"), &curves, &dataset, &combo)?;
    }
    let seg_cfg = cfg.segmentation();
    let set = SegmentedSet::collect(
        dataset
            .trials
            .par_iter()
            .map(|t| (t.trial_id.clone(), segment_graded(t, &cfg.scheme, &combo, &seg_cfg, &overrides)))
            .collect::<Vec<_>>(),
    );
    for (id, why) in &set.skipped {
        log::info!("trial {id} skipped: {why}");
    }
    artifacts::write_segments(&out.join("segments.csv"), &segment_rows(&set))?;

    let extraction = stage("extract", extract_matrix(&set.trials, &combo, &cfg.features))?;
    let full = extraction.matrix;
    if full.n_rows() == 0 {
        return Err(DspnError::Stage {
            stage: "extract",
            source: CoreError::InvalidInput("no trial produced a feature row".into()),
        });
    }
    artifacts::write_matrix(&out.join("features.csv"), &full)?;

    let pruned = stage("select", prune_correlated(&full, cfg.selection.correlation_threshold))?;
    let mut ranking = stage("select", relieff_rank(&pruned.kept, cfg.selection.k_neighbors))?;
    ranking.pruned = pruned.pruned;
    artifacts::write_ranking(&out.join("ranking.csv"), &ranking)?;
    let kept = pruned.kept;

    let n_ranked = ranking.order.len();
    let ks: Vec<usize> = if cfg.incremental_search {
        (1..=cfg.max_k.unwrap_or(n_ranked).min(n_ranked)).collect()
    } else {
        vec![cfg.max_k.unwrap_or(n_ranked).min(n_ranked)]
    };
    let plans: Vec<CvPlan> = ks
        .par_iter()
        .map(|&k| stage("evaluate", top_k_matrix(&kept, &ranking, k).and_then(|m| plan_cv(&m, &cv))))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..plans.len()).flat_map(|p| (0..cv.folds).map(move |f| (p, f))).collect();
    let mut fold_results: Vec<FoldResult> =
        jobs.par_iter().map(|&(p, f)| stage("evaluate", run_fold(&plans[p], f, &trainer))).collect::<Result<_>>()?;
    let mut warnings = set.warnings.clone();
    let mut entries = Vec::with_capacity(ks.len());
    for (plan, &k) in plans.iter().zip(&ks).rev() {
        let results = fold_results.split_off(fold_results.len() - cv.folds);
        let outcome = assemble_cv(plan, results);
        entries.push((k, outcome));
    }
    entries.reverse();
    let entries: Vec<SearchEntry> = entries
        .into_iter()
        .map(|(k, o)| {
            warnings.extend(o.warnings.into_iter().map(|w| format!("K={k}: {w}")));
            SearchEntry { k, features: ranking.top(k).to_vec(), metrics: o.report }
        })
        .collect();
    let search = stage("evaluate", SearchReport::from_entries(entries))?;
    artifacts::write_metrics(&out.join("metrics.csv"), &search)?;
    let best = search.best().clone();
    artifacts::write_roc(&out.join("roc.csv"), &best.metrics.roc_points)?;

    let profiles: Vec<ProfileSet> =
        combo.iter().zip(&curves).map(|(&ch, c)| profiles_from_curves(ch, c, cfg.profile_len)).collect();
    artifacts::write_profiles(&out.join("profiles.csv"), &profiles)?;

    let best_m = stage("train", top_k_matrix(&kept, &ranking, best.k))?;
    let (model, w) = stage("train", train_final(&best_m, &trainer, &cv))?;
    warnings.extend(w.into_iter().map(|w| format!("final model: {w}")));
    artifacts::write_json(&out.join("model.json"), &model)?;

    warnings.extend(ranking.warnings.iter().cloned());
    warnings.extend(profiles.iter().flat_map(|p| p.warnings.iter().cloned()));
    let mut class_counts = [0usize; 4];
    for g in full.labels() {
        class_counts[g.index()] += 1;
    }
    let mut skipped = set.skipped.clone();
    skipped.extend(extraction.skipped);
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: dataset.meta.name.clone(),
        scheme: cfg.scheme.clone(),
        family: family.to_string(),
        combo: combo.iter().map(|c| c.name()).collect::<Vec<_>>().join("+"),
        trainer,
        cv,
        n_trials: dataset.trials.len(),
        n_rows: full.n_rows(),
        class_counts,
        skipped,
        warnings,
        features_total: full.n_cols(),
        pruned: ranking.pruned.clone(),
        ranking: ranking.order.iter().cloned().zip(ranking.weights.iter().copied()).collect(),
        search,
        best,
    };
    artifacts::write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

fn segment_rows(set: &SegmentedSet) -> Vec<SegmentOverride> {
    let mut rows = Vec::new();
    for t in &set.trials {
        for (&channel, cs) in &t.channels {
            for (i, s) in cs.segments.iter().enumerate() {
                rows.push(SegmentOverride {
                    trial_id: t.trial_id.clone(),
                    channel,
                    segment_index: i,
                    start: s.start,
                    end: s.end,
                });
            }
        }
    }
    rows
}

type Curves = Vec<(String, SeverityGrade, Vec<f64>)>;

/// Per channel, the curve each graded trial contributes to the class
/// profiles: the EMG envelope or the raw force.
fn channel_curves(
    dataset: &Dataset,
    cfg: &RunConfig,
    combo: &[ChannelKind],
    family: ChannelFamily,
) -> dspn_core::Result<Vec<Curves>> {
    let per_trial: Vec<Option<_>> = dataset
        .trials
        .par_iter()
        .map(|t| {
            let Some(grade) = t.grade(&cfg.scheme) else { return Ok(None) };
            let mut curves = Vec::with_capacity(combo.len());
            for ch in combo {
                let Some(trace) = t.channels.get(ch) else { return Ok(None) };
                curves.push(match family {
                    ChannelFamily::Emg => preprocess_emg(trace, &cfg.preprocess)?.envelope.into_samples(),
                    ChannelFamily::Grf => trace.samples().to_vec(),
                });
            }
            Ok(Some((t.trial_id.clone(), grade, curves)))
        })
        .collect::<dspn_core::Result<_>>()?;
    let mut out: Vec<Curves> = vec![Vec::new(); combo.len()];
    for (id, grade, curves) in per_trial.into_iter().flatten() {
        for (slot, c) in out.iter_mut().zip(curves) {
            slot.push((id.clone(), grade, c));
        }
    }
    Ok(out)
}

fn write_envelopes(dir: &Path, curves: &[Curves], dataset: &Dataset, combo: &[ChannelKind]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| DspnError::io(dir, e))?;
    for (&ch, per_channel) in combo.iter().zip(curves) {
        for (id, _, env) in per_channel {
            let fs_hz = dataset
                .trials
                .iter()
                .find(|t| &t.trial_id == id)
                .and_then(|t| t.channels.get(&ch))
                .map_or(1.0, |t| t.fs());
            let trace = stage("profiles", dspn_core::model::trace(env.clone(), fs_hz, ch))?;
            let name: String = id
                .chars()
                .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
                .collect();
            write_signal(&dir.join(format!("{name}_{}.csv", ch.name())), &trace)?;
        }
    }
    Ok(())
}
