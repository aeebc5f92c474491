//! Deterministic synthetic gait recordings with per-grade signatures:
//! later and weaker muscle activation, noisier EMG and a flatter, delayed
//! vertical force peak as severity increases.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::{design_butterworth, filter_in_place, FilterKind};
use crate::error::{Error, Result};
use crate::model::{trace, ChannelKind, Dataset, DatasetMeta, SeverityGrade, SubjectInfo, Trial};
use crate::rng::{rng_for, tag, Rng};

pub const SYNTH_SCHEME: &str = "synthetic-truth";

/// Lowest sampling rate that can carry 450 Hz burst content.
pub const MIN_FS_HZ: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassEffect {
    pub peak_delay_ms: f64,
    pub amplitude_factor: f64,
    /// Background EMG noise RMS relative to a unit burst.
    pub noise_level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub subjects_per_class: [usize; 4],
    pub trials_per_class: [usize; 4],
    pub fs: f64,
    pub duration_s: f64,
    pub class_effects: [ClassEffect; 4],
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let effect =
            |peak_delay_ms, amplitude_factor, noise_level| ClassEffect { peak_delay_ms, amplitude_factor, noise_level };
        SynthSpec {
            subjects_per_class: [29, 18, 16, 14],
            trials_per_class: [142, 93, 85, 72],
            fs: 2000.0,
            duration_s: 1.5,
            class_effects: [
                effect(0.0, 1.0, 0.01),
                effect(15.0, 0.9, 0.015),
                effect(30.0, 0.8, 0.02),
                effect(50.0, 0.65, 0.03),
            ],
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn with_seed(seed: u64) -> Self {
        SynthSpec { seed, ..SynthSpec::default() }
    }

    /// Moves every non-Absent effect toward the Absent one; `scale = 1`
    /// keeps the spec, `scale = 0` makes all grades identical.
    pub fn with_gap_scale(&self, scale: f64) -> Self {
        let base = self.class_effects[0];
        let mut out = self.clone();
        for e in out.class_effects.iter_mut().skip(1) {
            e.peak_delay_ms = base.peak_delay_ms + (e.peak_delay_ms - base.peak_delay_ms) * scale;
            e.amplitude_factor = base.amplitude_factor + (e.amplitude_factor - base.amplitude_factor) * scale;
            e.noise_level = base.noise_level + (e.noise_level - base.noise_level) * scale;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.fs < MIN_FS_HZ || !self.fs.is_finite() {
            return Err(Error::Spec(format!(
                "fs = {} Hz cannot represent 450 Hz burst content; need fs >= {MIN_FS_HZ} Hz",
                self.fs
            )));
        }
        for g in SeverityGrade::ALL {
            let (s, t) = (self.subjects_per_class[g.index()], self.trials_per_class[g.index()]);
            if s < 1 || t < 1 {
                return Err(Error::Spec(format!("{g}: subject and trial counts must be at least 1")));
            }
            if t < s {
                return Err(Error::Spec(format!("{g}: {t} trials cannot cover {s} subjects")));
            }
            let e = self.class_effects[g.index()];
            if !(e.amplitude_factor > 0.0 && e.amplitude_factor.is_finite()) {
                return Err(Error::Spec(format!("{g}: amplitude factor must be positive")));
            }
            if !(e.peak_delay_ms >= 0.0 && e.peak_delay_ms.is_finite()) {
                return Err(Error::Spec(format!("{g}: peak delay must be non-negative")));
            }
            if !(e.noise_level >= 0.0 && e.noise_level.is_finite()) {
                return Err(Error::Spec(format!("{g}: noise level must be non-negative")));
            }
        }
        let a = self.class_effects[0];
        if a.peak_delay_ms != 0.0 || a.amplitude_factor != 1.0 {
            return Err(Error::Spec("Absent effects must be delay 0 and amplitude factor 1".into()));
        }
        let max_delay = self.class_effects.iter().map(|e| e.peak_delay_ms).fold(0.0, f64::max);
        if !(self.duration_s >= 1.0 && self.duration_s.is_finite()) {
            return Err(Error::Spec(format!("duration {} s is shorter than one 1 s gait cycle", self.duration_s)));
        }
        if max_delay > 100.0 {
            return Err(Error::Spec(format!("peak delay {max_delay} ms exceeds the 100 ms limit")));
        }
        Ok(())
    }

    fn n_samples(&self) -> usize {
        (self.duration_s * self.fs).round() as usize
    }
}

/// Which subject and trial slot a generated trial fills.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialSlot {
    pub grade: SeverityGrade,
    pub subject: usize,
    pub repeat: usize,
}

impl TrialSlot {
    pub fn subject_id(&self) -> String {
        format!("{}-s{:02}", self.grade.name().to_ascii_lowercase(), self.subject)
    }

    pub fn trial_id(&self) -> String {
        format!("{}-t{:02}", self.subject_id(), self.repeat)
    }
}

/// All trial slots in dataset order. Trials of a class are dealt to its
/// subjects round-robin.
pub fn trial_slots(spec: &SynthSpec) -> Vec<TrialSlot> {
    let mut out = Vec::new();
    for g in SeverityGrade::ALL {
        let subjects = spec.subjects_per_class[g.index()];
        for j in 0..spec.trials_per_class[g.index()] {
            out.push(TrialSlot { grade: g, subject: j % subjects, repeat: j / subjects });
        }
    }
    out
}

struct SubjectTraits {
    body_mass_kg: f64,
    gain: f64,
    delay_ms: f64,
}

fn subject_traits(spec: &SynthSpec, grade: SeverityGrade, subject: usize) -> SubjectTraits {
    let mut rng = rng_for(spec.seed, &[tag::SYNTH_SUBJECT, grade.index() as u64, subject as u64]);
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    SubjectTraits {
        body_mass_kg: 72.0 + 4.0 * n.sample(&mut rng),
        gain: 1.0 + 0.03 * n.sample(&mut rng),
        delay_ms: 3.0 * n.sample(&mut rng),
    }
}

/// Burst onsets within the cycle (seconds) and relative burst heights per muscle.
fn muscle_pattern(kind: ChannelKind) -> ([f64; 4], [f64; 4]) {
    match kind {
        ChannelKind::EmgGm => ([0.12, 0.45, 0.78, 1.11], [1.0, 0.6, 0.8, 0.55]),
        ChannelKind::EmgTa => ([0.18, 0.51, 0.84, 1.17], [0.7, 1.0, 0.6, 0.75]),
        _ => ([0.06, 0.39, 0.72, 1.05], [1.0, 0.7, 0.85, 0.6]),
    }
}

const BURST_SIGMA_S: f64 = 0.04;
const EMG_SCALE_V: f64 = 1e-3;
const STANCE_START_S: f64 = 0.2;
const STANCE_LEN_S: f64 = 0.7;

fn band_noise(rng: &mut Rng, n: usize, fs: f64) -> Result<Vec<f64>> {
    let nd = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x: Vec<f64> = (0..n).map(|_| nd.sample(rng)).collect();
    let bp = design_butterworth(FilterKind::Bandpass, 4, &[20.0, 450.0], fs)?;
    filter_in_place(&bp.sections, &mut x, false);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(x)
}

fn emg_channel(
    spec: &SynthSpec,
    kind: ChannelKind,
    effect: &ClassEffect,
    traits: &SubjectTraits,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let n = spec.n_samples();
    let fs = spec.fs;
    let nd = Normal::new(0.0, 1.0).expect("unit normal");
    let carrier = band_noise(rng, n, fs)?;
    let background = band_noise(rng, n, fs)?;
    let (onsets, heights) = muscle_pattern(kind);
    let delay_s = (effect.peak_delay_ms + traits.delay_ms + 2.0 * nd.sample(rng)) / 1000.0;
    let amp = effect.amplitude_factor * traits.gain * (1.0 + 0.02 * nd.sample(rng));
    // Scale onsets so the four bursts span any duration of at least 1 s.
    let stretch = spec.duration_s / 1.5;
    let hum_amp = 0.1 + 0.05 * rng.random::<f64>();
    let hum_phase = 2.0 * PI * rng.random::<f64>();
    let drift = 0.1 * (2.0 * rng.random::<f64>() - 1.0);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let window: f64 = onsets
            .iter()
            .zip(&heights)
            .map(|(&c, &h)| {
                let u = (t - (c * stretch + delay_s)) / BURST_SIGMA_S;
                h * (-0.5 * u * u).exp()
            })
            .sum();
        let v = amp * window * carrier[i]
            + effect.noise_level * background[i]
            + hum_amp * (2.0 * PI * 60.0 * t + hum_phase).sin()
            + drift * t / spec.duration_s;
        out.push(v * EMG_SCALE_V);
    }
    Ok(out)
}

fn grf_channels(spec: &SynthSpec, effect: &ClassEffect, traits: &SubjectTraits, rng: &mut Rng) -> [Vec<f64>; 3] {
    let n = spec.n_samples();
    let fs = spec.fs;
    let nd = Normal::new(0.0, 1.0).expect("unit normal");
    let weight = traits.body_mass_kg * 9.81;
    let start = STANCE_START_S * (1.0 + 0.02 * nd.sample(rng));
    let len = STANCE_LEN_S * (1.0 + 0.02 * nd.sample(rng));
    let amp = effect.amplitude_factor * (1.0 + 0.05 * nd.sample(rng));
    let late = amp.sqrt() * (1.0 + 0.05 * nd.sample(rng));
    let valley = (0.35 * (1.0 - amp) + 0.04 * nd.sample(rng)).max(0.0);
    let (c1, c2) = (0.25 + 0.02 * nd.sample(rng), 0.75 + 0.02 * nd.sample(rng));
    let shift = (effect.peak_delay_ms + traits.delay_ms) / 1000.0 / len;
    let sensor = 0.002 * weight;
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let u = (i as f64 / fs - start) / len;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let edge = (PI * u).sin().sqrt();
        let hump = |c: f64, h: f64| h * (-0.5 * ((u - c) / 0.13).powi(2)).exp();
        // The first peak is delayed and flattened with severity; the valley
        // between the peaks fills in.
        let z = edge * (hump(c1 + shift, 1.1 * amp) + hump(c2, 1.05 * late) + valley);
        let y = 0.22 * amp * (2.0 * PI * (u - 0.5 * shift)).sin() * edge;
        let x = 0.05 * (4.0 * PI * u).sin() * edge;
        out[0][i] = weight * x + sensor * nd.sample(rng);
        out[1][i] = -weight * y + sensor * nd.sample(rng);
        out[2][i] = weight * z + sensor * nd.sample(rng);
    }
    out
}

fn fuzzy_score(spec: &SynthSpec, grade: SeverityGrade, slot: &TrialSlot) -> f64 {
    let mut rng =
        rng_for(spec.seed, &[tag::SYNTH_SCORE, grade.index() as u64, slot.subject as u64, slot.repeat as u64]);
    let (lo, hi) = match grade {
        SeverityGrade::Absent => (0.0, 2.5),
        SeverityGrade::Mild => (2.5 + 1e-6, 5.0),
        SeverityGrade::Moderate => (5.0, 8.0),
        SeverityGrade::Severe => (8.0, 12.0),
    };
    rng.random_range(lo..hi)
}

/// Generates one trial. Each slot draws from its own seed stream, so
/// trials can be produced in any order or in parallel.
pub fn generate_trial(spec: &SynthSpec, slot: &TrialSlot) -> Result<Trial> {
    let g = slot.grade;
    let effect = spec.class_effects[g.index()];
    let traits = subject_traits(spec, g, slot.subject);
    let mut rng = rng_for(spec.seed, &[tag::SYNTH_TRIAL, g.index() as u64, slot.subject as u64, slot.repeat as u64]);
    let mut trial = Trial::new(&slot.subject_id(), &slot.trial_id());
    trial.grades.insert(SYNTH_SCHEME.to_string(), g);
    trial.scores.insert(SYNTH_SCHEME.to_string(), fuzzy_score(spec, g, slot));
    for kind in ChannelKind::EMG {
        let samples = emg_channel(spec, kind, &effect, &traits, &mut rng)?;
        trial.channels.insert(kind, trace(samples, spec.fs, kind)?);
    }
    let [x, y, z] = grf_channels(spec, &effect, &traits, &mut rng);
    for (kind, samples) in ChannelKind::GRF.into_iter().zip([x, y, z]) {
        trial.channels.insert(kind, trace(samples, spec.fs, kind)?);
    }
    Ok(trial)
}

/// Dataset metadata, with one subject entry per generated subject.
pub fn dataset_meta(spec: &SynthSpec) -> DatasetMeta {
    let mut subjects = Vec::new();
    for g in SeverityGrade::ALL {
        for s in 0..spec.subjects_per_class[g.index()] {
            let slot = TrialSlot { grade: g, subject: s, repeat: 0 };
            let mut demographics = BTreeMap::new();
            demographics.insert("body_mass_kg".to_string(), subject_traits(spec, g, s).body_mass_kg);
            subjects.push(SubjectInfo { id: slot.subject_id(), demographics });
        }
    }
    DatasetMeta { name: format!("synthetic-seed{}", spec.seed), schemes: vec![SYNTH_SCHEME.to_string()], subjects }
}

pub fn generate_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let trials = trial_slots(spec).iter().map(|s| generate_trial(spec, s)).collect::<Result<Vec<_>>>()?;
    Ok(Dataset { meta: dataset_meta(spec), trials })
}
