//! Time-domain feature extraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::model::{ChannelKind, SeverityGrade};
use crate::segmentation::Segment;

pub const N_FEATURES: usize = 19;
pub const MIN_SEGMENT_LEN: usize = 16;
pub const AR_ORDER: usize = 4;
const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Lmav,
    Nsv,
    Wl,
    Wamp,
    Ssc,
    Zc,
    Mob,
    Com,
    Skw,
    Ar1,
    Ar2,
    Ar3,
    Ar4,
    M0,
    M2,
    M4,
    M6,
    Ac1,
    Ac2,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; N_FEATURES] = [
        FeatureKind::Lmav,
        FeatureKind::Nsv,
        FeatureKind::Wl,
        FeatureKind::Wamp,
        FeatureKind::Ssc,
        FeatureKind::Zc,
        FeatureKind::Mob,
        FeatureKind::Com,
        FeatureKind::Skw,
        FeatureKind::Ar1,
        FeatureKind::Ar2,
        FeatureKind::Ar3,
        FeatureKind::Ar4,
        FeatureKind::M0,
        FeatureKind::M2,
        FeatureKind::M4,
        FeatureKind::M6,
        FeatureKind::Ac1,
        FeatureKind::Ac2,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Lmav => "LMAV",
            FeatureKind::Nsv => "NSV",
            FeatureKind::Wl => "WL",
            FeatureKind::Wamp => "WAMP",
            FeatureKind::Ssc => "SSC",
            FeatureKind::Zc => "ZC",
            FeatureKind::Mob => "MOB",
            FeatureKind::Com => "COM",
            FeatureKind::Skw => "SKW",
            FeatureKind::Ar1 => "AR1",
            FeatureKind::Ar2 => "AR2",
            FeatureKind::Ar3 => "AR3",
            FeatureKind::Ar4 => "AR4",
            FeatureKind::M0 => "M0",
            FeatureKind::M2 => "M2",
            FeatureKind::M4 => "M4",
            FeatureKind::M6 => "M6",
            FeatureKind::Ac1 => "AC1",
            FeatureKind::Ac2 => "AC2",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown feature {s}")))
    }
}

/// Column name for a feature on a channel, e.g. `GM.WL`.
pub fn column_name(channel: ChannelKind, kind: FeatureKind) -> String {
    format!("{}.{}", channel.name(), kind.name())
}

/// Formula used for the NSV slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NsvFormula {
    /// Mean of `ln(1 + (x / rms)^2)`.
    #[default]
    LogScaledPower,
}

/// How several segments of one trial become matrix rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// One row per trial: mean of the per-segment vectors.
    #[default]
    MeanOfSegments,
    /// One row per segment index present on every channel.
    PerSegment,
    /// One row per trial from the span covering all segments.
    WholeTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// WAMP threshold as a fraction of segment RMS.
    pub wamp_threshold: f64,
    /// SSC threshold as a fraction of segment mean square.
    pub ssc_threshold: f64,
    /// ZC threshold as a fraction of segment RMS.
    pub zc_threshold: f64,
    pub nsv: NsvFormula,
    pub aggregation: Aggregation,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            wamp_threshold: 0.1,
            ssc_threshold: 0.01,
            zc_threshold: 0.01,
            nsv: NsvFormula::default(),
            aggregation: Aggregation::default(),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wamp_threshold", self.wamp_threshold),
            ("ssc_threshold", self.ssc_threshold),
            ("zc_threshold", self.zc_threshold),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Parameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; N_FEATURES],
    /// Set when the segment was all zeros and guard values were used.
    pub degenerate: bool,
}

impl FeatureVector {
    pub fn get(&self, kind: FeatureKind) -> f64 {
        self.values[kind.index()]
    }
}

pub fn mav(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64
}

pub fn lmav(x: &[f64]) -> f64 {
    (mav(x) + LOG_EPS).ln()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn nsv(x: &[f64], formula: NsvFormula) -> f64 {
    match formula {
        NsvFormula::LogScaledPower => {
            let r = rms(x);
            if r == 0.0 {
                return 0.0;
            }
            x.iter().map(|v| (v / r).powi(2).ln_1p()).sum::<f64>() / x.len() as f64
        }
    }
}

pub fn wl(x: &[f64]) -> f64 {
    x.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

pub fn wamp(x: &[f64], tau: f64) -> f64 {
    x.windows(2).filter(|w| (w[1] - w[0]).abs() >= tau).count() as f64
}

pub fn ssc(x: &[f64], tau: f64) -> f64 {
    x.windows(3).filter(|w| (w[1] - w[0]) * (w[1] - w[2]) >= tau).count() as f64
}

pub fn zc(x: &[f64], tau: f64) -> f64 {
    x.windows(2).filter(|w| w[0] * w[1] < 0.0 && (w[0] - w[1]).abs() >= tau).count() as f64
}

fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Hjorth mobility; zero for a constant segment.
pub fn mobility(x: &[f64]) -> f64 {
    let v = variance(x);
    if v <= 0.0 {
        return 0.0;
    }
    (variance(&diff(x)) / v).sqrt()
}

/// Hjorth complexity; zero when either mobility is zero.
pub fn complexity(x: &[f64]) -> f64 {
    let m = mobility(x);
    if m == 0.0 {
        return 0.0;
    }
    mobility(&diff(x)) / m
}

pub fn skewness(x: &[f64]) -> f64 {
    let v = variance(x);
    if v <= 0.0 {
        return 0.0;
    }
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let s = v.sqrt();
    x.iter().map(|xi| ((xi - m) / s).powi(3)).sum::<f64>() / x.len() as f64
}

/// AR coefficients `a` with `x[i] ~ sum_k a[k] x[i-1-k]`, by Levinson-Durbin
/// on the biased autocorrelation. All zeros for a zero-energy segment.
pub fn ar_coefficients(x: &[f64], order: usize) -> Vec<f64> {
    let n = x.len();
    let r: Vec<f64> = (0..=order)
        .map(|k| if k >= n { 0.0 } else { x[..n - k].iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64 })
        .collect();
    let mut a = vec![0.0; order];
    if r[0] <= 0.0 {
        return a;
    }
    let mut err = r[0];
    for m in 0..order {
        let acc = r[m + 1] - (0..m).map(|j| a[j] * r[m - j]).sum::<f64>();
        let k = acc / err;
        let prev = a.clone();
        a[m] = k;
        for j in 0..m {
            a[j] = prev[j] - k * prev[m - 1 - j];
        }
        err *= 1.0 - k * k;
        if err <= 0.0 {
            break;
        }
    }
    a
}

/// `sum (diff^order x)^2` for orders 0, 1, 2, 3 (M0, M2, M4, M6).
pub fn moments(x: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    let mut d = x.to_vec();
    for slot in out.iter_mut() {
        *slot = d.iter().map(|v| v * v).sum();
        d = diff(&d);
    }
    out
}

pub fn ac1(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    wl(x) / (x.len() - 1) as f64
}

pub fn ac2(x: &[f64]) -> f64 {
    if x.len() < 3 {
        return 0.0;
    }
    x.windows(3).map(|w| (w[2] - w[0]).abs()).sum::<f64>() / (x.len() - 2) as f64
}

pub fn extract_features(x: &[f64], cfg: &FeatureConfig) -> Result<FeatureVector> {
    cfg.validate()?;
    if x.len() < MIN_SEGMENT_LEN {
        return Err(Error::SegmentTooShort { len: x.len(), min: MIN_SEGMENT_LEN });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("segment contains non-finite samples".into()));
    }
    let r = rms(x);
    let ar = ar_coefficients(x, AR_ORDER);
    let m = moments(x);
    let values = [
        lmav(x),
        nsv(x, cfg.nsv),
        wl(x),
        wamp(x, cfg.wamp_threshold * r),
        ssc(x, cfg.ssc_threshold * r * r),
        zc(x, cfg.zc_threshold * r),
        mobility(x),
        complexity(x),
        skewness(x),
        ar[0],
        ar[1],
        ar[2],
        ar[3],
        m[0],
        m[1],
        m[2],
        m[3],
        ac1(x),
        ac2(x),
    ];
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("feature {} is not finite", FeatureKind::ALL[i])));
    }
    Ok(FeatureVector { values, degenerate: r == 0.0 })
}

/// Samples and segments for one channel of one trial, as handed over by
/// segmentation. EMG channels carry the filtered signal, GRF the raw force.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSegments {
    pub samples: Vec<f64>,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedTrial {
    pub trial_id: String,
    pub label: SeverityGrade,
    pub channels: BTreeMap<ChannelKind, ChannelSegments>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixExtraction {
    pub matrix: FeatureMatrix,
    /// Trial ids dropped, with the reason.
    pub skipped: Vec<(String, String)>,
    /// Row keys containing at least one all-zero segment.
    pub degenerate_rows: Vec<String>,
}

fn segment_slice<'a>(cs: &'a ChannelSegments, s: &Segment) -> Result<&'a [f64]> {
    if s.start >= s.end || s.end > cs.samples.len() {
        return Err(Error::InvalidInput(format!(
            "segment [{}, {}) outside signal of {} samples",
            s.start,
            s.end,
            cs.samples.len()
        )));
    }
    Ok(&cs.samples[s.start..s.end])
}

/// Feature rows for each trial, one channel block per requested channel.
/// Rows come out in trial-id order. Trials missing a channel, or whose
/// segments cannot be featurised, are skipped and listed.
pub fn extract_matrix(
    trials: &[SegmentedTrial],
    channels: &[ChannelKind],
    cfg: &FeatureConfig,
) -> Result<MatrixExtraction> {
    cfg.validate()?;
    if channels.is_empty() {
        return Err(Error::InvalidInput("no channels requested".into()));
    }
    let mut columns = Vec::with_capacity(channels.len() * N_FEATURES);
    for &ch in channels {
        columns.extend(FeatureKind::ALL.iter().map(|&k| column_name(ch, k)));
    }
    let mut matrix = FeatureMatrix::new(columns, Vec::new(), Vec::new(), Vec::new())?;
    let mut order: Vec<&SegmentedTrial> = trials.iter().collect();
    order.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));

    let mut skipped = Vec::new();
    let mut degenerate_rows = Vec::new();
    for trial in order {
        match trial_rows(trial, channels, cfg) {
            Ok(rows) => {
                for (key, values, degenerate) in rows {
                    if degenerate {
                        degenerate_rows.push(key.clone());
                    }
                    matrix.push_row(&values, trial.label, key);
                }
            }
            Err(e) => {
                log::warn!("skipping trial {}: {e}", trial.trial_id);
                skipped.push((trial.trial_id.clone(), format!("{e}")));
            }
        }
    }
    Ok(MatrixExtraction { matrix, skipped, degenerate_rows })
}

type Row = (String, Vec<f64>, bool);

fn trial_rows(trial: &SegmentedTrial, channels: &[ChannelKind], cfg: &FeatureConfig) -> Result<Vec<Row>> {
    let per_channel: Vec<&ChannelSegments> = channels
        .iter()
        .map(|ch| trial.channels.get(ch).ok_or_else(|| Error::InvalidInput(format!("missing channel {ch}"))))
        .collect::<Result<_>>()?;
    for (cs, ch) in per_channel.iter().zip(channels) {
        if cs.segments.is_empty() {
            return Err(Error::InvalidInput(format!("no segments on channel {ch}")));
        }
    }
    match cfg.aggregation {
        Aggregation::MeanOfSegments => {
            let mut values = Vec::with_capacity(channels.len() * N_FEATURES);
            let mut degenerate = false;
            for cs in &per_channel {
                let mut acc = [0.0; N_FEATURES];
                for s in &cs.segments {
                    let fv = extract_features(segment_slice(cs, s)?, cfg)?;
                    degenerate |= fv.degenerate;
                    for (a, v) in acc.iter_mut().zip(fv.values) {
                        *a += v;
                    }
                }
                let k = cs.segments.len() as f64;
                values.extend(acc.iter().map(|a| a / k));
            }
            Ok(vec![(trial.trial_id.clone(), values, degenerate)])
        }
        Aggregation::WholeTrial => {
            let mut values = Vec::with_capacity(channels.len() * N_FEATURES);
            let mut degenerate = false;
            for cs in &per_channel {
                let start = cs.segments.iter().map(|s| s.start).min().unwrap_or(0);
                let end = cs.segments.iter().map(|s| s.end).max().unwrap_or(0);
                let span = Segment { start, end, source: cs.segments[0].source };
                let fv = extract_features(segment_slice(cs, &span)?, cfg)?;
                degenerate |= fv.degenerate;
                values.extend_from_slice(&fv.values);
            }
            Ok(vec![(trial.trial_id.clone(), values, degenerate)])
        }
        Aggregation::PerSegment => {
            let count = per_channel.iter().map(|cs| cs.segments.len()).min().unwrap_or(0);
            (0..count)
                .map(|k| {
                    let mut values = Vec::with_capacity(channels.len() * N_FEATURES);
                    let mut degenerate = false;
                    for cs in &per_channel {
                        let fv = extract_features(segment_slice(cs, &cs.segments[k])?, cfg)?;
                        degenerate |= fv.degenerate;
                        values.extend_from_slice(&fv.values);
                    }
                    Ok((format!("{}#{k}", trial.trial_id), values, degenerate))
                })
                .collect()
        }
    }
}
