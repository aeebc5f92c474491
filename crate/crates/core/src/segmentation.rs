//! Stance and burst segmentation.
//!
//! GRF stance is found on the vertical component with a penalised
//! piecewise-linear change-point search and copied onto the other two
//! force components. EMG is cut onset-to-onset from hysteresis bursts on
//! the envelope. Per-grade mean/std profiles of normalised envelopes are
//! produced for plotting.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::dsp::{preprocess_emg, PreprocessConfig};
use crate::error::{Error, Result};
use crate::model::{ChannelFamily, ChannelKind, Dataset, SeverityGrade, SignalTrace};

/// Half-open sample range `[start, end)` on one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub source: ChannelKind,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangePointConfig {
    /// Minimum samples between change points (and to either signal end).
    pub min_segment_len: usize,
    pub max_change_points: usize,
    /// Residual-reduction threshold in units of the z-scored signal's
    /// squared error. `None` selects `2 ln(N) sigma^2` with a robust noise
    /// estimate.
    pub penalty: Option<f64>,
}

impl Default for ChangePointConfig {
    fn default() -> Self {
        ChangePointConfig { min_segment_len: 200, max_change_points: 4, penalty: None }
    }
}

impl ChangePointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_segment_len < 2 {
            return Err(Error::Parameter("min_segment_len must be at least 2".into()));
        }
        if self.max_change_points < 1 {
            return Err(Error::Parameter("max_change_points must be at least 1".into()));
        }
        if let Some(p) = self.penalty {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::Parameter(format!("penalty must be non-negative, got {p}")));
            }
        }
        Ok(())
    }
}

/// O(1) least-squares line residuals over any sub-range via prefix sums.
struct LineCost {
    sz: Vec<f64>,
    szz: Vec<f64>,
    stz: Vec<f64>,
    origin: f64,
}

impl LineCost {
    fn new(z: &[f64]) -> Self {
        let n = z.len();
        let origin = (n / 2) as f64;
        let (mut sz, mut szz, mut stz) =
            (Vec::with_capacity(n + 1), Vec::with_capacity(n + 1), Vec::with_capacity(n + 1));
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        sz.push(0.0);
        szz.push(0.0);
        stz.push(0.0);
        for (i, &v) in z.iter().enumerate() {
            a += v;
            b += v * v;
            c += (i as f64 - origin) * v;
            sz.push(a);
            szz.push(b);
            stz.push(c);
        }
        LineCost { sz, szz, stz, origin }
    }

    /// Residual sum of squares of the best line on `[a, b)`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        let m = (b - a) as f64;
        if b - a < 3 {
            return 0.0;
        }
        let s_z = self.sz[b] - self.sz[a];
        let s_zz = self.szz[b] - self.szz[a];
        // Local time u = t - a.
        let s_uz = (self.stz[b] - self.stz[a]) + (self.origin - a as f64) * s_z;
        let s_u = m * (m - 1.0) / 2.0;
        let s_uu = (m - 1.0) * m * (2.0 * m - 1.0) / 6.0;
        let cov = s_uz - s_u * s_z / m;
        let var_u = s_uu - s_u * s_u / m;
        (s_zz - s_z * s_z / m - cov * cov / var_u).max(0.0)
    }

    /// Best split of `[a, b)` honouring the minimum length, as (index, reduction).
    fn best_split(&self, a: usize, b: usize, min_len: usize) -> Option<(usize, f64)> {
        if b - a < 2 * min_len {
            return None;
        }
        let whole = self.sse(a, b);
        let mut best: Option<(usize, f64)> = None;
        for s in a + min_len..=b - min_len {
            let red = whole - self.sse(a, s) - self.sse(s, b);
            if best.is_none_or(|(_, r)| red > r) {
                best = Some((s, red));
            }
        }
        best
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Robust noise variance of a piecewise-linear signal from the median
/// absolute second difference.
fn noise_variance(z: &[f64]) -> f64 {
    if z.len() < 3 {
        return 0.0;
    }
    let d: Vec<f64> = z.windows(3).map(|w| (w[2] - 2.0 * w[1] + w[0]).abs()).collect();
    let sigma = median(d) / (0.674_489_75 * 6.0f64.sqrt());
    sigma * sigma
}

/// Greedy binary segmentation with piecewise-linear least-squares cost.
///
/// The signal is z-scored first, so indices are invariant under affine
/// changes of scale and offset. Each accepted change point reduces the
/// total residual by more than the penalty.
pub fn detect_change_points(x: &[f64], cfg: &ChangePointConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = x.len();
    let min_len = cfg.min_segment_len;
    if n < 2 * min_len {
        return Err(Error::SignalTooShort { len: n, min: 2 * min_len });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    if !(var > 0.0) {
        return Ok(Vec::new());
    }
    let sd = var.sqrt();
    let z: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();
    let cost = LineCost::new(&z);
    let floor = 1e-8 * n as f64;
    let penalty = cfg.penalty.unwrap_or_else(|| 2.0 * (n as f64).ln() * noise_variance(&z)).max(floor);

    let mut pieces: Vec<(usize, usize, Option<(usize, f64)>)> = vec![(0, n, cost.best_split(0, n, min_len))];
    let mut cps = Vec::new();
    while cps.len() < cfg.max_change_points {
        let best = pieces.iter().enumerate().filter_map(|(i, p)| p.2.map(|(s, r)| (i, s, r))).fold(
            None::<(usize, usize, f64)>,
            |acc, cur| match acc {
                Some(a) if a.2 >= cur.2 => Some(a),
                _ => Some(cur),
            },
        );
        let Some((idx, split, red)) = best else { break };
        if red <= penalty {
            break;
        }
        let (a, b, _) = pieces.remove(idx);
        pieces.push((a, split, cost.best_split(a, split, min_len)));
        pieces.push((split, b, cost.best_split(split, b, min_len)));
        cps.push(split);
    }
    cps.sort_unstable();
    Ok(cps)
}

/// Loaded stance on a vertical force trace: the run of change-point pieces
/// around the highest-mean piece whose means exceed 5% of the peak force.
pub fn segment_stance(grfz: &SignalTrace, cfg: &ChangePointConfig) -> Result<Segment> {
    let x = grfz.samples();
    let n = x.len();
    let peak = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::StanceNotFound);
    }
    let cps = detect_change_points(x, cfg)?;
    let mut bounds = Vec::with_capacity(cps.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(&cps);
    bounds.push(n);
    let means: Vec<f64> = bounds.windows(2).map(|w| x[w[0]..w[1]].iter().sum::<f64>() / (w[1] - w[0]) as f64).collect();
    let threshold = 0.05 * peak;
    let (best, &best_mean) =
        means.iter().enumerate().fold((0, &f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    if !(best_mean > threshold) {
        return Err(Error::StanceNotFound);
    }
    let (mut lo, mut hi) = (best, best);
    while lo > 0 && means[lo - 1] > threshold {
        lo -= 1;
    }
    while hi + 1 < means.len() && means[hi + 1] > threshold {
        hi += 1;
    }
    let (mut start, mut end) = (bounds[lo], bounds[hi + 1]);
    // Piece boundaries are only resolved to the minimum segment length, so
    // snap both ends to where the force crosses 1% of peak.
    let edge = 0.01 * peak;
    while start < end && x[start] <= edge {
        start += 1;
    }
    while end > start && x[end - 1] <= edge {
        end -= 1;
    }
    while start > 0 && x[start - 1] > edge {
        start -= 1;
    }
    while end < n && x[end] > edge {
        end += 1;
    }
    let min_len = cfg.min_segment_len.min(n);
    if end - start < min_len {
        let missing = min_len - (end - start);
        let left = (missing / 2).min(start);
        start -= left;
        end = (end + missing - left).min(n);
        start = end.saturating_sub(min_len).min(start);
    }
    Ok(Segment { start, end, source: ChannelKind::GrfZ })
}

/// Applies the same sample range to other co-recorded channels.
pub fn propagate_segment(
    seg: &Segment,
    source: &SignalTrace,
    targets: &[(ChannelKind, &SignalTrace)],
) -> Result<Vec<Segment>> {
    targets
        .iter()
        .map(|(kind, t)| {
            if t.len() != source.len() || (t.fs() - source.fs()).abs() > 1e-9 * source.fs() {
                return Err(Error::InvalidInput(format!(
                    "channel {kind} ({} samples at {} Hz) does not match segment source ({} samples at {} Hz)",
                    t.len(),
                    t.fs(),
                    source.len(),
                    source.fs()
                )));
            }
            Ok(Segment { start: seg.start, end: seg.end, source: *kind })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstConfig {
    pub on_frac: f64,
    pub off_frac: f64,
    pub min_burst_len: usize,
    pub expected_bursts: usize,
}

impl Default for BurstConfig {
    fn default() -> Self {
        BurstConfig { on_frac: 0.15, off_frac: 0.10, min_burst_len: 50, expected_bursts: 4 }
    }
}

impl BurstConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.off_frac && self.off_frac <= self.on_frac && self.on_frac < 1.0) {
            return Err(Error::Parameter(format!(
                "burst thresholds must satisfy 0 < off ({}) <= on ({}) < 1",
                self.off_frac, self.on_frac
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstDetection {
    /// Onset-to-onset segments; the last runs to the end of the signal.
    pub segments: Vec<Segment>,
    /// Active intervals `[onset, offset)` after merging short bursts.
    pub bursts: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Hysteresis burst detection on a non-negative envelope.
pub fn detect_emg_bursts(envelope: &SignalTrace, channel: ChannelKind, cfg: &BurstConfig) -> Result<BurstDetection> {
    cfg.validate()?;
    let x = envelope.samples();
    let peak = x.iter().copied().fold(0.0f64, f64::max);
    if let Some(v) = x.iter().find(|v| **v < -1e-9 * peak.max(f64::MIN_POSITIVE)) {
        return Err(Error::Precondition(format!("envelope must be non-negative, found {v}")));
    }
    if !(peak > 0.0) {
        return Err(Error::NoActivity);
    }
    let (on, off) = (cfg.on_frac * peak, cfg.off_frac * peak);
    let mut raw: Vec<(usize, usize)> = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &v) in x.iter().enumerate() {
        match open {
            None if v >= on => open = Some(i),
            Some(s) if v < off => {
                raw.push((s, i));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        raw.push((s, x.len()));
    }

    // Fold bursts shorter than the minimum into a neighbour.
    let mut bursts: Vec<(usize, usize)> = Vec::with_capacity(raw.len());
    let mut carry: Option<usize> = None;
    for (i, &(s, e)) in raw.iter().enumerate() {
        let s = carry.take().unwrap_or(s);
        if e - s >= cfg.min_burst_len {
            bursts.push((s, e));
        } else if let Some(prev) = bursts.last_mut() {
            prev.1 = e;
        } else if i + 1 < raw.len() {
            carry = Some(s);
        } else {
            bursts.push((s, e));
        }
    }

    let mut warnings = Vec::new();
    if bursts.len() != cfg.expected_bursts {
        let msg = format!("{channel}: detected {} bursts, expected {}", bursts.len(), cfg.expected_bursts);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let segments = bursts
        .iter()
        .enumerate()
        .map(|(k, &(s, _))| Segment { start: s, end: bursts.get(k + 1).map_or(x.len(), |b| b.0), source: channel })
        .collect();
    Ok(BurstDetection { segments, bursts, warnings })
}

/// A reviewed replacement for one detected segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentOverride {
    pub trial_id: String,
    pub channel: ChannelKind,
    pub segment_index: usize,
    pub start: usize,
    pub end: usize,
}

/// Replaces detected segments one-for-one with the overrides keyed by
/// `(trial_id, channel, segment_index)`; unlisted segments pass through.
pub fn apply_overrides(
    trial_id: &str,
    channel: ChannelKind,
    segments: &[Segment],
    overrides: &[SegmentOverride],
    signal_len: usize,
) -> Result<Vec<Segment>> {
    let mut out = segments.to_vec();
    for o in overrides.iter().filter(|o| o.trial_id == trial_id && o.channel == channel) {
        if o.end <= o.start {
            return Err(Error::InvalidOverride(format!(
                "{trial_id}/{channel} segment {}: end {} is not after start {}",
                o.segment_index, o.end, o.start
            )));
        }
        if o.end > signal_len {
            return Err(Error::InvalidOverride(format!(
                "{trial_id}/{channel} segment {}: end {} beyond signal length {signal_len}",
                o.segment_index, o.end
            )));
        }
        let slot = out.get_mut(o.segment_index).ok_or_else(|| {
            Error::InvalidOverride(format!(
                "{trial_id}/{channel}: segment index {} out of range ({} segments)",
                o.segment_index,
                segments.len()
            ))
        })?;
        slot.start = o.start;
        slot.end = o.end;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub grade: SeverityGrade,
    pub mean_curve: Vec<f64>,
    pub std_curve: Vec<f64>,
    pub n_trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSet {
    pub channel: ChannelKind,
    pub profiles: Vec<ClassProfile>,
    pub warnings: Vec<String>,
}

/// Divides by the curve's own RMS (all-zero curves are returned unchanged).
pub fn rms_normalize(x: &[f64]) -> Vec<f64> {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter().map(|v| v / rms).collect()
    } else {
        x.to_vec()
    }
}

/// Linear interpolation onto `len` equally spaced points spanning the input.
pub fn resample_linear(x: &[f64], len: usize) -> Vec<f64> {
    match (x.len(), len) {
        (_, 0) | (0, _) => Vec::new(),
        (1, _) => vec![x[0]; len],
        (_, 1) => vec![x[0]],
        (n, _) => (0..len)
            .map(|j| {
                let pos = j as f64 * (n - 1) as f64 / (len - 1) as f64;
                let i = (pos.floor() as usize).min(n - 2);
                let frac = pos - i as f64;
                x[i] + frac * (x[i + 1] - x[i])
            })
            .collect(),
    }
}

/// Per-grade pointwise mean and population standard deviation of
/// RMS-normalised, resampled curves. Curves are reduced in trial-id order.
pub fn profiles_from_curves(
    channel: ChannelKind,
    curves: &[(String, SeverityGrade, Vec<f64>)],
    len: usize,
) -> ProfileSet {
    let mut by_grade: BTreeMap<SeverityGrade, Vec<(&str, Vec<f64>)>> = BTreeMap::new();
    for (id, grade, curve) in curves {
        by_grade.entry(*grade).or_default().push((id.as_str(), resample_linear(&rms_normalize(curve), len)));
    }
    let mut profiles = Vec::new();
    let mut warnings = Vec::new();
    for grade in SeverityGrade::ALL {
        let Some(mut group) = by_grade.remove(&grade) else {
            let msg = format!("{channel}: no trials for grade {grade}; profile omitted");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        group.sort_by(|a, b| a.0.cmp(b.0));
        let k = group.len() as f64;
        let mut mean = vec![0.0; len];
        for (_, c) in &group {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= k);
        let mut var = vec![0.0; len];
        for (_, c) in &group {
            for ((s, v), m) in var.iter_mut().zip(c).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std_curve = var.into_iter().map(|s| (s / k).sqrt()).collect();
        profiles.push(ClassProfile { grade, mean_curve: mean, std_curve, n_trials: group.len() });
    }
    ProfileSet { channel, profiles, warnings }
}

/// Class profiles over a dataset: EMG channels use the low-pass envelope,
/// GRF channels the raw force.
pub fn class_profiles(
    dataset: &Dataset,
    scheme: &str,
    channel: ChannelKind,
    len: usize,
    preprocess: &PreprocessConfig,
) -> Result<ProfileSet> {
    let mut curves = Vec::with_capacity(dataset.trials.len());
    for trial in &dataset.trials {
        let Some(grade) = trial.grade(scheme) else { continue };
        let trace = trial
            .channels
            .get(&channel)
            .ok_or_else(|| Error::InvalidInput(format!("trial {} has no {channel} channel", trial.trial_id)))?;
        let curve = match channel.family() {
            ChannelFamily::Emg => preprocess_emg(trace, preprocess)?.envelope.into_samples(),
            ChannelFamily::Grf => trace.samples().to_vec(),
        };
        curves.push((trial.trial_id.clone(), grade, curve));
    }
    Ok(profiles_from_curves(channel, &curves, len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{trace, Unit};
    use alloc::string::ToString;
    use core::f64::consts::PI;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    /// Brute-force oracle: exact two-piece line fit by direct least squares.
    fn two_piece_oracle(x: &[f64], min_len: usize) -> usize {
        let fit = |y: &[f64]| {
            let n = y.len() as f64;
            let tm = (n - 1.0) / 2.0;
            let ym = y.iter().sum::<f64>() / n;
            let (mut sty, mut stt) = (0.0, 0.0);
            for (i, v) in y.iter().enumerate() {
                sty += (i as f64 - tm) * (v - ym);
                stt += (i as f64 - tm).powi(2);
            }
            let b = sty / stt;
            y.iter().enumerate().map(|(i, v)| (v - ym - b * (i as f64 - tm)).powi(2)).sum::<f64>()
        };
        (min_len..=x.len() - min_len)
            .min_by(|&a, &b| (fit(&x[..a]) + fit(&x[a..])).total_cmp(&(fit(&x[..b]) + fit(&x[b..]))))
            .unwrap()
    }

    fn kinked_ramp(n: usize, at: usize, noise: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let nd = Normal::new(0.0, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let base = if i < at { 0.01 * i as f64 } else { 0.01 * at as f64 - 0.03 * (i - at) as f64 };
                base + noise * nd.sample(&mut rng)
            })
            .collect()
    }

    #[test]
    fn constant_signal_has_no_change_points() {
        let cps = detect_change_points(&[4.0; 1000], &ChangePointConfig::default()).unwrap();
        assert!(cps.is_empty());
    }

    #[test]
    fn two_piece_ramp_matches_brute_force() {
        let cfg = ChangePointConfig::default();
        for (noise, seed) in [(0.0, 0), (0.05, 1), (0.2, 2)] {
            let x = kinked_ramp(1000, 500, noise, seed);
            let oracle = two_piece_oracle(&x, 200);
            assert!((490..=510).contains(&oracle), "oracle {oracle}");
            let cps = detect_change_points(&x, &cfg).unwrap();
            assert!(!cps.is_empty());
            // The first accepted split is the global two-piece optimum.
            let single = detect_change_points(&x, &ChangePointConfig { max_change_points: 1, ..cfg.clone() }).unwrap();
            // Noise-free kinks tie between the two samples adjoining the knee.
            assert!(single.len() == 1 && single[0].abs_diff(oracle) <= usize::from(noise == 0.0));
            let near: Vec<_> = cps.iter().filter(|&&c| (490..=510).contains(&c)).collect();
            assert_eq!(near.len(), 1, "{cps:?}");
        }
        // Noise-free: exactly one change point.
        assert_eq!(detect_change_points(&kinked_ramp(1000, 500, 0.0, 0), &cfg).unwrap().len(), 1);
    }

    #[test]
    fn short_middle_piece_cannot_be_isolated() {
        // Flat, 150-sample ramp, flat: both true breakpoints are closer than 200.
        let x: Vec<f64> = (0..1000)
            .map(|i| match i {
                0..425 => 0.0,
                425..575 => (i - 425) as f64 / 150.0,
                _ => 1.0,
            })
            .collect();
        let cps = detect_change_points(&x, &ChangePointConfig::default()).unwrap();
        let inside = cps.iter().filter(|&&c| (425..=575).contains(&c)).count();
        assert!(inside <= 1, "{cps:?}");
        let mut bounds = vec![0];
        bounds.extend(&cps);
        bounds.push(1000);
        assert!(bounds.windows(2).all(|w| w[1] - w[0] >= 200));
    }

    #[test]
    fn too_short_and_bad_config() {
        assert!(matches!(
            detect_change_points(&[0.0; 399], &ChangePointConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
        let bad = ChangePointConfig { min_segment_len: 1, ..Default::default() };
        assert!(detect_change_points(&[0.0; 10], &bad).is_err());
    }

    #[test]
    fn change_points_are_affine_invariant() {
        let x = kinked_ramp(1200, 430, 0.05, 9);
        let cfg = ChangePointConfig::default();
        let base = detect_change_points(&x, &cfg).unwrap();
        for (a, b) in [(3.0, 1.0), (-0.5, 100.0), (1e4, -7.0)] {
            let y: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            assert_eq!(detect_change_points(&y, &cfg).unwrap(), base);
        }
    }

    fn double_hump(n: usize, start: usize, len: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i < start || i >= start + len {
                    return 0.0;
                }
                let tau = (i - start) as f64 / len as f64;
                700.0 * ((PI * tau).sin() + 0.25 * (3.0 * PI * tau).sin())
            })
            .collect()
    }

    #[test]
    fn stance_covers_support() {
        for (start, len) in [(300usize, 1400usize), (150, 1000), (900, 1600)] {
            let x = double_hump(3000, start, len);
            let t = trace(x.clone(), 2000.0, ChannelKind::GrfZ).unwrap();
            let seg = segment_stance(&t, &ChangePointConfig::default()).unwrap();
            let support: Vec<usize> = (0..3000).filter(|&i| x[i] > 0.0).collect();
            let covered = support.iter().filter(|&&i| i >= seg.start && i < seg.end).count();
            assert!(covered as f64 >= 0.95 * support.len() as f64, "{seg:?}");
            assert!(seg.len() <= len + 200, "{seg:?} start {start} len {len}");
        }
    }

    #[test]
    fn stance_errors_and_boundary() {
        let zeros = trace(vec![0.0; 3000], 2000.0, ChannelKind::GrfZ).unwrap();
        assert_eq!(segment_stance(&zeros, &ChangePointConfig::default()), Err(Error::StanceNotFound));
        // Contact already under way at the first sample.
        let flush = double_hump(3100, 0, 1200)[100..].to_vec();
        let t = trace(flush, 2000.0, ChannelKind::GrfZ).unwrap();
        let seg = segment_stance(&t, &ChangePointConfig::default()).unwrap();
        assert_eq!(seg.start, 0);
    }

    #[test]
    fn propagation() {
        let src = trace(vec![1.0; 1000], 100.0, ChannelKind::GrfZ).unwrap();
        let a = trace(vec![0.0; 1000], 100.0, ChannelKind::GrfX).unwrap();
        let b = trace(vec![0.0; 1000], 100.0, ChannelKind::GrfY).unwrap();
        let seg = Segment { start: 100, end: 600, source: ChannelKind::GrfZ };
        let out = propagate_segment(&seg, &src, &[(ChannelKind::GrfX, &a), (ChannelKind::GrfY, &b)]).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.start == 100 && s.end == 600));
        assert_eq!(out[1].source, ChannelKind::GrfY);
        let short = trace(vec![0.0; 999], 100.0, ChannelKind::GrfX).unwrap();
        assert!(propagate_segment(&seg, &src, &[(ChannelKind::GrfX, &short)]).is_err());
        assert!(propagate_segment(&seg, &src, &[]).unwrap().is_empty());
    }

    fn bumps(n: usize, centres: &[f64], width: f64) -> Vec<f64> {
        (0..n).map(|i| centres.iter().map(|c| (-0.5 * ((i as f64 - c) / width).powi(2)).exp()).sum()).collect()
    }

    #[test]
    fn four_bumps_four_segments() {
        let centres = [300.0, 900.0, 1500.0, 2100.0];
        let width = 60.0;
        let env = trace(bumps(2600, &centres, width), 2000.0, ChannelKind::EmgTa).unwrap();
        let det = detect_emg_bursts(&env, ChannelKind::EmgTa, &BurstConfig::default()).unwrap();
        assert_eq!(det.segments.len(), 4);
        assert!(det.warnings.is_empty());
        // Truth: where a unit Gaussian crosses 15% of its peak.
        let half = width * (2.0 * (1.0 / 0.15f64).ln()).sqrt();
        for (seg, c) in det.segments.iter().zip(centres) {
            let truth = c - half;
            assert!((seg.start as f64 - truth).abs() <= 20.0, "{} vs {truth}", seg.start);
            assert!(seg.end as f64 > c);
        }
        assert_eq!(det.segments[3].end, 2600);
    }

    #[test]
    fn single_bump_and_flat() {
        let env = trace(bumps(1000, &[500.0], 50.0), 1000.0, ChannelKind::EmgGm).unwrap();
        let det = detect_emg_bursts(&env, ChannelKind::EmgGm, &BurstConfig::default()).unwrap();
        assert_eq!(det.segments.len(), 1);
        assert_eq!(det.segments[0].end, 1000);
        assert_eq!(det.warnings.len(), 1);
        let flat = trace(vec![0.0; 100], 1000.0, ChannelKind::EmgGm).unwrap();
        assert_eq!(detect_emg_bursts(&flat, ChannelKind::EmgGm, &BurstConfig::default()), Err(Error::NoActivity));
    }

    #[test]
    fn short_bursts_merge() {
        // A 20-sample blip after a long burst is absorbed by it.
        let mut x = vec![0.0; 1000];
        x[100..300].iter_mut().for_each(|v| *v = 1.0);
        x[400..420].iter_mut().for_each(|v| *v = 1.0);
        x[600..800].iter_mut().for_each(|v| *v = 1.0);
        let env = trace(x, 1000.0, ChannelKind::EmgVl).unwrap();
        let det = detect_emg_bursts(&env, ChannelKind::EmgVl, &BurstConfig::default()).unwrap();
        assert_eq!(det.bursts, vec![(100, 420), (600, 800)]);
        assert_eq!(det.segments[0], Segment { start: 100, end: 600, source: ChannelKind::EmgVl });
    }

    #[test]
    fn overrides() {
        let segs: Vec<Segment> =
            (0..4).map(|k| Segment { start: k * 100, end: k * 100 + 100, source: ChannelKind::EmgGm }).collect();
        assert_eq!(apply_overrides("t1", ChannelKind::EmgGm, &segs, &[], 400).unwrap(), segs);
        let o = SegmentOverride {
            trial_id: "t1".to_string(),
            channel: ChannelKind::EmgGm,
            segment_index: 2,
            start: 210,
            end: 290,
        };
        let out = apply_overrides("t1", ChannelKind::EmgGm, &segs, core::slice::from_ref(&o), 400).unwrap();
        for (k, (a, b)) in out.iter().zip(&segs).enumerate() {
            assert_eq!(a == b, k != 2);
        }
        assert_eq!((out[2].start, out[2].end), (210, 290));
        // Overrides for other keys are ignored.
        assert_eq!(apply_overrides("t2", ChannelKind::EmgGm, &segs, core::slice::from_ref(&o), 400).unwrap(), segs);
        let bad = SegmentOverride { start: 300, end: 300, ..o.clone() };
        assert!(matches!(
            apply_overrides("t1", ChannelKind::EmgGm, &segs, &[bad], 400),
            Err(Error::InvalidOverride(_))
        ));
        let oob = SegmentOverride { end: 401, ..o.clone() };
        assert!(apply_overrides("t1", ChannelKind::EmgGm, &segs, &[oob], 400).is_err());
        let idx = SegmentOverride { segment_index: 9, ..o };
        assert!(apply_overrides("t1", ChannelKind::EmgGm, &segs, &[idx], 400).is_err());
    }

    #[test]
    fn profiles_basic_cases() {
        let curve: Vec<f64> = (0..500).map(|i| (i as f64 / 40.0).sin().abs()).collect();
        let curves = vec![
            ("b".to_string(), SeverityGrade::Mild, curve.clone()),
            ("a".to_string(), SeverityGrade::Mild, curve.iter().map(|v| 3.5 * v).collect()),
            ("c".to_string(), SeverityGrade::Mild, curve.iter().map(|v| 0.2 * v).collect()),
            ("d".to_string(), SeverityGrade::Severe, curve.clone()),
        ];
        let set = profiles_from_curves(ChannelKind::EmgTa, &curves, 1000);
        assert_eq!(set.profiles.len(), 2);
        assert_eq!(set.warnings.len(), 2);
        let expected = resample_linear(&rms_normalize(&curve), 1000);
        for p in &set.profiles {
            assert_eq!(p.mean_curve.len(), 1000);
            assert!(p.std_curve.iter().all(|&s| s.abs() <= 1e-9));
            for (m, e) in p.mean_curve.iter().zip(&expected) {
                assert!((m - e).abs() <= 1e-9);
            }
        }
        assert_eq!(set.profiles[0].n_trials, 3);
    }

    #[test]
    fn profile_mean_is_pointwise_average() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let curves: Vec<(String, SeverityGrade, Vec<f64>)> = (0..6)
            .map(|k| {
                let n = 300 + 50 * k;
                let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                (alloc::format!("t{k}"), SeverityGrade::Moderate, c)
            })
            .collect();
        let set = profiles_from_curves(ChannelKind::EmgVl, &curves, 200);
        let p = &set.profiles[0];
        let normed: Vec<Vec<f64>> = curves.iter().map(|c| resample_linear(&rms_normalize(&c.2), 200)).collect();
        for j in 0..200 {
            let m = normed.iter().map(|c| c[j]).sum::<f64>() / 6.0;
            assert!((p.mean_curve[j] - m).abs() <= 1e-12);
            assert!(p.std_curve[j] >= 0.0);
        }
    }

    #[test]
    fn resample_endpoints() {
        let x = [0.0, 10.0, 20.0];
        let r = resample_linear(&x, 5);
        assert_eq!(r, vec![0.0, 5.0, 10.0, 15.0, 20.0]);
        let _ = Unit::Volt;
    }
}
