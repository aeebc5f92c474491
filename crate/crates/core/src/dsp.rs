//! EMG preprocessing: linear detrend, Butterworth band-pass, power-line
//! notches with harmonics, full-wave rectification and a zero-padded
//! low-pass envelope.
//!
//! Filters are stored as cascades of second-order sections and applied in
//! transposed direct form II. Zero-phase mode runs the cascade forward and
//! then over the time-reversed output.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SignalTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterKind {
    Lowpass,
    Highpass,
    Bandpass,
    Bandstop,
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Poles strictly inside the unit circle (Jury conditions for a quadratic).
    pub fn is_stable(&self) -> bool {
        self.a2.abs() < 1.0 && self.a1.abs() < 1.0 + self.a2
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = Complex64::new(self.b0, 0.0) + z_inv * self.b1 + z2 * self.b2;
        let den = Complex64::new(1.0, 0.0) + z_inv * self.a1 + z2 * self.a2;
        num / den
    }
}

/// A designed IIR filter as a cascade of second-order sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub order: usize,
    pub cutoffs_hz: Vec<f64>,
    pub fs_hz: f64,
    pub sections: Vec<Biquad>,
}

impl FilterSpec {
    /// Complex frequency response at `f_hz`.
    pub fn response(&self, f_hz: f64) -> Complex64 {
        let w = 2.0 * PI * f_hz / self.fs_hz;
        let z_inv = Complex64::new(w.cos(), -w.sin());
        self.sections.iter().fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, f_hz: f64) -> f64 {
        20.0 * self.response(f_hz).norm().log10()
    }

    pub fn is_stable(&self) -> bool {
        self.sections.iter().all(Biquad::is_stable)
    }

    /// The lowest cutoff, used to size padding and settling windows.
    pub fn lowest_cutoff_hz(&self) -> f64 {
        self.cutoffs_hz.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub const MAX_ORDER: usize = 12;

/// Designs a digital Butterworth filter by bilinear transform of the
/// analog prototype, with frequency prewarping at the cutoffs.
///
/// `order` is the prototype order; band-pass and band-stop designs have
/// twice as many poles.
pub fn design_butterworth(kind: FilterKind, order: usize, cutoffs_hz: &[f64], fs_hz: f64) -> Result<FilterSpec> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::InvalidInput(format!("filter order {order} outside 1..={MAX_ORDER}")));
    }
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(Error::InvalidInput(format!("sampling rate must be positive, got {fs_hz}")));
    }
    let expected = match kind {
        FilterKind::Lowpass | FilterKind::Highpass => 1,
        FilterKind::Bandpass | FilterKind::Bandstop => 2,
    };
    if cutoffs_hz.len() != expected {
        return Err(Error::InvalidInput(format!("{kind:?} needs {expected} cutoff(s), got {}", cutoffs_hz.len())));
    }
    let nyquist = fs_hz / 2.0;
    for &c in cutoffs_hz {
        if !(c.is_finite() && c > 0.0 && c < nyquist) {
            return Err(Error::Design(format!(
                "cutoff {c} Hz must lie strictly inside (0, {nyquist}) Hz for fs = {fs_hz} Hz"
            )));
        }
    }
    if expected == 2 && cutoffs_hz[0] >= cutoffs_hz[1] {
        return Err(Error::Design(format!(
            "band edges must be increasing, got {} Hz and {} Hz",
            cutoffs_hz[0], cutoffs_hz[1]
        )));
    }

    let warp = |f: f64| 2.0 * fs_hz * (PI * f / fs_hz).tan();
    let prototype: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect();

    let (zeros, poles, gain) = match kind {
        FilterKind::Lowpass => {
            let wc = warp(cutoffs_hz[0]);
            let poles = prototype.iter().map(|p| p * wc).collect();
            (Vec::new(), poles, wc.powi(order as i32))
        }
        FilterKind::Highpass => {
            let wc = warp(cutoffs_hz[0]);
            let poles = prototype.iter().map(|p| Complex64::new(wc, 0.0) / p).collect();
            (vec![Complex64::new(0.0, 0.0); order], poles, 1.0)
        }
        FilterKind::Bandpass => {
            let (w1, w2) = (warp(cutoffs_hz[0]), warp(cutoffs_hz[1]));
            let (bw, w0) = (w2 - w1, (w1 * w2).sqrt());
            let mut poles = Vec::with_capacity(2 * order);
            for p in &prototype {
                let lp = p * (bw / 2.0);
                let root = (lp * lp - w0 * w0).sqrt();
                poles.push(lp + root);
                poles.push(lp - root);
            }
            (vec![Complex64::new(0.0, 0.0); order], poles, bw.powi(order as i32))
        }
        FilterKind::Bandstop => {
            let (w1, w2) = (warp(cutoffs_hz[0]), warp(cutoffs_hz[1]));
            let (bw, w0) = (w2 - w1, (w1 * w2).sqrt());
            let mut poles = Vec::with_capacity(2 * order);
            let mut zeros = Vec::with_capacity(2 * order);
            for p in &prototype {
                let hp = Complex64::new(bw / 2.0, 0.0) / p;
                let root = (hp * hp - w0 * w0).sqrt();
                poles.push(hp + root);
                poles.push(hp - root);
                zeros.push(Complex64::new(0.0, w0));
                zeros.push(Complex64::new(0.0, -w0));
            }
            (zeros, poles, 1.0)
        }
    };

    let (zd, pd, kd) = bilinear(&zeros, &poles, gain, fs_hz);
    let sections = zpk_to_sections(&zd, &pd, kd);
    let spec = FilterSpec { kind, order, cutoffs_hz: cutoffs_hz.to_vec(), fs_hz, sections };
    if !spec.is_stable() {
        return Err(Error::Design(format!(
            "{kind:?} design of order {order} at {cutoffs_hz:?} Hz is numerically unstable"
        )));
    }
    Ok(spec)
}

fn bilinear(zeros: &[Complex64], poles: &[Complex64], gain: f64, fs: f64) -> (Vec<Complex64>, Vec<Complex64>, f64) {
    let fs2 = Complex64::new(2.0 * fs, 0.0);
    let map = |s: &Complex64| (fs2 + s) / (fs2 - s);
    let mut zd: Vec<Complex64> = zeros.iter().map(map).collect();
    let pd: Vec<Complex64> = poles.iter().map(map).collect();
    // Zeros at infinity land on Nyquist.
    zd.resize(pd.len(), Complex64::new(-1.0, 0.0));
    let num = zeros.iter().fold(Complex64::new(1.0, 0.0), |acc, z| acc * (fs2 - z));
    let den = poles.iter().fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    (zd, pd, gain * (num / den).re)
}

/// Groups roots into real-coefficient quadratics: conjugate pairs first,
/// then real roots paired smallest-with-largest, then a lone real root.
fn quadratics(roots: &[Complex64]) -> Vec<(f64, f64)> {
    let tol = 1e-10;
    let mut complex: Vec<Complex64> = roots.iter().copied().filter(|r| r.im > tol * r.norm().max(1.0)).collect();
    complex.sort_by(|a, b| b.norm().total_cmp(&a.norm()).then(a.im.total_cmp(&b.im)));
    let mut reals: Vec<f64> = roots.iter().filter(|r| r.im.abs() <= tol * r.norm().max(1.0)).map(|r| r.re).collect();
    reals.sort_by(f64::total_cmp);

    let mut out: Vec<(f64, f64)> = complex.iter().map(|r| (-2.0 * r.re, r.norm_sqr())).collect();
    let (mut lo, mut hi) = (0usize, reals.len());
    while hi - lo >= 2 {
        let (a, b) = (reals[lo], reals[hi - 1]);
        out.push((-(a + b), a * b));
        lo += 1;
        hi -= 1;
    }
    if hi - lo == 1 {
        // First-order factor (1 - r z^-1) stored with a zero second coefficient.
        out.push((-reals[lo], 0.0));
    }
    out
}

fn zpk_to_sections(zeros: &[Complex64], poles: &[Complex64], gain: f64) -> Vec<Biquad> {
    let pq = quadratics(poles);
    let mut zq = quadratics(zeros);
    zq.resize(pq.len(), (0.0, 0.0));
    let mut sections: Vec<Biquad> =
        pq.iter().zip(&zq).map(|(&(a1, a2), &(b1, b2))| Biquad { b0: 1.0, b1, b2, a1, a2 }).collect();
    if let Some(first) = sections.first_mut() {
        first.b0 *= gain;
        first.b1 *= gain;
        first.b2 *= gain;
    }
    sections
}

/// Second-order notch at `f0_hz` with quality factor `q`.
pub fn design_notch(f0_hz: f64, q: f64, fs_hz: f64) -> Result<Biquad> {
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::InvalidInput(format!("notch Q must be positive, got {q}")));
    }
    if !(f0_hz > 0.0 && f0_hz < fs_hz / 2.0) {
        return Err(Error::Design(format!(
            "notch frequency {f0_hz} Hz must lie strictly inside (0, {}) Hz",
            fs_hz / 2.0
        )));
    }
    let w0 = 2.0 * PI * f0_hz / fs_hz;
    let bw = w0 / q;
    let g = 1.0 / (1.0 + (bw / 2.0).tan());
    let c = w0.cos();
    Ok(Biquad { b0: g, b1: -2.0 * g * c, b2: g, a1: -2.0 * g * c, a2: 2.0 * g - 1.0 })
}

fn run_sections(sections: &[Biquad], data: &mut [f64]) {
    for s in sections {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in data.iter_mut() {
            let x = *v;
            let y = s.b0 * x + z1;
            z1 = s.b1 * x - s.a1 * y + z2;
            z2 = s.b2 * x - s.a2 * y;
            *v = y;
        }
    }
}

/// Filters `data` in place with a section cascade, optionally forward-backward.
pub fn filter_in_place(sections: &[Biquad], data: &mut [f64], zero_phase: bool) {
    run_sections(sections, data);
    if zero_phase {
        data.reverse();
        run_sections(sections, data);
        data.reverse();
    }
}

fn check_fs(spec_fs: f64, x: &SignalTrace) -> Result<()> {
    if (spec_fs - x.fs()).abs() > 1e-9 * spec_fs {
        return Err(Error::InvalidInput(format!("filter designed for {spec_fs} Hz applied to a {} Hz signal", x.fs())));
    }
    Ok(())
}

pub fn apply_filter(spec: &FilterSpec, x: &SignalTrace, zero_phase: bool) -> Result<SignalTrace> {
    check_fs(spec.fs_hz, x)?;
    let mut data = x.samples().to_vec();
    filter_in_place(&spec.sections, &mut data, zero_phase);
    x.with_samples(data)
}

/// Removes the least-squares straight line.
pub fn detrend_linear(x: &SignalTrace) -> Result<SignalTrace> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("detrending needs at least 2 samples, got {n}")));
    }
    let data = x.samples();
    let centre = (n as f64 - 1.0) / 2.0;
    let mean = data.iter().sum::<f64>() / n as f64;
    let (mut sty, mut stt) = (0.0, 0.0);
    for (i, &v) in data.iter().enumerate() {
        let t = i as f64 - centre;
        sty += t * (v - mean);
        stt += t * t;
    }
    let slope = sty / stt;
    let out = data.iter().enumerate().map(|(i, &v)| v - mean - slope * (i as f64 - centre)).collect();
    x.with_samples(out)
}

/// Power-line harmonics below Nyquist: `k * fundamental` for `k = 1..=max_harmonics`.
pub fn notch_frequencies(fs_hz: f64, fundamental_hz: f64, max_harmonics: usize) -> Result<Vec<f64>> {
    if !(fundamental_hz > 0.0 && fundamental_hz < fs_hz / 2.0) {
        return Err(Error::Design(format!(
            "power-line fundamental {fundamental_hz} Hz is not below Nyquist ({} Hz)",
            fs_hz / 2.0
        )));
    }
    Ok((1..=max_harmonics).map(|k| k as f64 * fundamental_hz).take_while(|&f| f < fs_hz / 2.0).collect())
}

pub fn notch_powerline(
    x: &SignalTrace,
    fundamental_hz: f64,
    q: f64,
    max_harmonics: usize,
    zero_phase: bool,
) -> Result<SignalTrace> {
    let sections = notch_frequencies(x.fs(), fundamental_hz, max_harmonics)?
        .into_iter()
        .map(|f| design_notch(f, q, x.fs()))
        .collect::<Result<Vec<_>>>()?;
    let mut data = x.samples().to_vec();
    filter_in_place(&sections, &mut data, zero_phase);
    x.with_samples(data)
}

pub fn rectify(x: &SignalTrace) -> SignalTrace {
    let out = x.samples().iter().map(|v| v.abs()).collect();
    // Absolute values of finite samples are finite, so this cannot fail.
    x.with_samples(out).expect("rectified trace is valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub bp_lo_hz: f64,
    pub bp_hi_hz: f64,
    pub bp_order: usize,
    pub notch_fundamental_hz: f64,
    pub notch_q: f64,
    pub notch_max_harmonics: usize,
    pub env_cut_hz: f64,
    pub env_order: usize,
    pub zero_phase: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            bp_lo_hz: 4.0,
            bp_hi_hz: 500.0,
            bp_order: 4,
            notch_fundamental_hz: 60.0,
            notch_q: 35.0,
            notch_max_harmonics: 5,
            env_cut_hz: 5.0,
            env_order: 6,
            zero_phase: true,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bp_lo_hz > 0.0 && self.bp_lo_hz < self.bp_hi_hz) {
            return Err(Error::InvalidInput(format!(
                "band-pass edges must satisfy 0 < lo < hi, got {} and {}",
                self.bp_lo_hz, self.bp_hi_hz
            )));
        }
        if !(self.env_cut_hz > 0.0) {
            return Err(Error::InvalidInput("envelope cutoff must be positive".into()));
        }
        if !(self.notch_q > 0.0) {
            return Err(Error::InvalidInput("notch Q must be positive".into()));
        }
        Ok(())
    }
}

/// Zero-pad length in samples: three times `order / cutoff` seconds.
pub fn envelope_pad_len(order: usize, cutoff_hz: f64, fs_hz: f64) -> usize {
    (3.0 * order as f64 / cutoff_hz * fs_hz).ceil() as usize
}

/// Low-pass envelope of a rectified signal. The input is zero-padded on
/// both sides before filtering and the padding is stripped afterwards.
pub fn envelope_lowpass(x: &SignalTrace, cfg: &PreprocessConfig) -> Result<SignalTrace> {
    let data = x.samples();
    let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * peak;
    if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| **v < -tol) {
        return Err(Error::Precondition(format!("envelope input must be rectified; sample {i} is {v}")));
    }
    let spec = design_butterworth(FilterKind::Lowpass, cfg.env_order, &[cfg.env_cut_hz], x.fs())?;
    let pad = envelope_pad_len(cfg.env_order, cfg.env_cut_hz, x.fs());
    let mut padded = vec![0.0; data.len() + 2 * pad];
    padded[pad..pad + data.len()].copy_from_slice(data);
    filter_in_place(&spec.sections, &mut padded, cfg.zero_phase);
    // Ringing below zero is clamped: an amplitude envelope is non-negative.
    let out = padded[pad..pad + data.len()].iter().map(|v| v.max(0.0)).collect();
    x.with_samples(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub filtered: SignalTrace,
    pub envelope: SignalTrace,
    /// Upper band-pass edge actually used (after any clamping).
    pub bp_hi_hz: f64,
    pub notches_hz: Vec<f64>,
    pub warnings: Vec<String>,
}

/// detrend -> band-pass -> power-line notches (= `filtered`), then
/// rectify -> low-pass envelope (= `envelope`).
pub fn preprocess_emg(x: &SignalTrace, cfg: &PreprocessConfig) -> Result<Preprocessed> {
    cfg.validate()?;
    let mut warnings = Vec::new();
    let fs = x.fs();
    let mut bp_hi = cfg.bp_hi_hz;
    if fs <= 2.0 * bp_hi {
        bp_hi = 0.45 * fs;
        let msg = format!(
            "band-pass upper edge {} Hz not below Nyquist at fs = {fs} Hz; clamped to {bp_hi} Hz",
            cfg.bp_hi_hz
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    if cfg.bp_lo_hz >= bp_hi {
        return Err(Error::InvalidInput(format!(
            "band-pass lower edge {} Hz is not below the usable upper edge {bp_hi} Hz",
            cfg.bp_lo_hz
        )));
    }
    let detrended = detrend_linear(x)?;
    let bandpass = design_butterworth(FilterKind::Bandpass, cfg.bp_order, &[cfg.bp_lo_hz, bp_hi], fs)?;
    let banded = apply_filter(&bandpass, &detrended, cfg.zero_phase)?;
    let notches_hz = notch_frequencies(fs, cfg.notch_fundamental_hz, cfg.notch_max_harmonics)?;
    let filtered =
        notch_powerline(&banded, cfg.notch_fundamental_hz, cfg.notch_q, cfg.notch_max_harmonics, cfg.zero_phase)?;
    let envelope = envelope_lowpass(&rectify(&filtered), cfg)?;
    Ok(Preprocessed { filtered, envelope, bp_hi_hz: bp_hi, notches_hz, warnings })
}
