//! Domain types shared by every stage: severity grades, channels, traces,
//! trials and datasets, plus the fuzzy-score grading map.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neuropathy severity class, ordered from healthiest to most affected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityGrade {
    Absent,
    Mild,
    Moderate,
    Severe,
}

impl SeverityGrade {
    pub const ALL: [SeverityGrade; 4] =
        [SeverityGrade::Absent, SeverityGrade::Mild, SeverityGrade::Moderate, SeverityGrade::Severe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            SeverityGrade::Absent => "Absent",
            SeverityGrade::Mild => "Mild",
            SeverityGrade::Moderate => "Moderate",
            SeverityGrade::Severe => "Severe",
        }
    }
}

impl fmt::Display for SeverityGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SeverityGrade {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidInput(format!("unknown severity grade `{s}`")))
    }
}

/// Defuzzified neuropathy degree score (dimensionless, non-negative).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct FuzzyScore(f64);

impl FuzzyScore {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidInput(format!("fuzzy score must be finite and non-negative, got {value}")));
        }
        Ok(FuzzyScore(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn grade(self) -> SeverityGrade {
        let x = self.0;
        if x <= 2.5 {
            SeverityGrade::Absent
        } else if x < 5.0 {
            SeverityGrade::Mild
        } else if x < 8.0 {
            SeverityGrade::Moderate
        } else {
            // The published intervals overlap at 8.0; the more severe label wins.
            SeverityGrade::Severe
        }
    }
}

/// Maps a raw score to its severity grade.
pub fn grade_from_fuzzy_score(score: f64) -> Result<SeverityGrade> {
    FuzzyScore::new(score).map(FuzzyScore::grade)
}

/// Signal families. EMG and GRF channels are never mixed in one study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelFamily {
    Emg,
    Grf,
}

impl FromStr for ChannelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "EMG" => Ok(ChannelFamily::Emg),
            "GRF" => Ok(ChannelFamily::Grf),
            _ => Err(Error::InvalidInput(format!("unknown channel family `{s}`"))),
        }
    }
}

impl fmt::Display for ChannelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ChannelFamily::Emg => "EMG",
            ChannelFamily::Grf => "GRF",
        })
    }
}

/// Recorded channel: three lower-limb muscles and three force components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    EmgGm,
    EmgTa,
    EmgVl,
    GrfX,
    GrfY,
    GrfZ,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 6] = [
        ChannelKind::EmgGm,
        ChannelKind::EmgTa,
        ChannelKind::EmgVl,
        ChannelKind::GrfX,
        ChannelKind::GrfY,
        ChannelKind::GrfZ,
    ];
    pub const EMG: [ChannelKind; 3] = [ChannelKind::EmgGm, ChannelKind::EmgTa, ChannelKind::EmgVl];
    pub const GRF: [ChannelKind; 3] = [ChannelKind::GrfX, ChannelKind::GrfY, ChannelKind::GrfZ];

    pub fn family(self) -> ChannelFamily {
        match self {
            ChannelKind::EmgGm | ChannelKind::EmgTa | ChannelKind::EmgVl => ChannelFamily::Emg,
            _ => ChannelFamily::Grf,
        }
    }

    /// Short label used in column names and files (`GM`, `GRFz`, ...).
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::EmgGm => "GM",
            ChannelKind::EmgTa => "TA",
            ChannelKind::EmgVl => "VL",
            ChannelKind::GrfX => "GRFx",
            ChannelKind::GrfY => "GRFy",
            ChannelKind::GrfZ => "GRFz",
        }
    }

    pub fn unit(self) -> Unit {
        match self.family() {
            ChannelFamily::Emg => Unit::Volt,
            ChannelFamily::Grf => Unit::Newton,
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase().replace(['_', '-'], "");
        let kind = match t.as_str() {
            "GM" | "EMGGM" | "GL" => ChannelKind::EmgGm,
            "TA" | "EMGTA" => ChannelKind::EmgTa,
            "VL" | "EMGVL" => ChannelKind::EmgVl,
            "GRFX" => ChannelKind::GrfX,
            "GRFY" => ChannelKind::GrfY,
            "GRFZ" => ChannelKind::GrfZ,
            _ => return Err(Error::InvalidInput(format!("unknown channel `{s}`"))),
        };
        Ok(kind)
    }
}

/// Returns the single family of a channel combination, or an error if the
/// combination is empty or mixes EMG and GRF.
pub fn combo_family(combo: &[ChannelKind]) -> Result<ChannelFamily> {
    let first = combo.first().ok_or_else(|| Error::InvalidInput("channel combination is empty".into()))?.family();
    if combo.iter().any(|c| c.family() != first) {
        return Err(Error::InvalidInput(format!(
            "channel combination {} mixes EMG and GRF channels; each study uses one family",
            combo_label(combo)
        )));
    }
    Ok(first)
}

/// `GM-TA-VL` style label for a channel combination.
pub fn combo_label(combo: &[ChannelKind]) -> String {
    combo.iter().map(|c| c.name()).collect::<Vec<_>>().join("-")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Volt,
    Newton,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Volt => "V",
            Unit::Newton => "N",
        }
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "V" => Ok(Unit::Volt),
            "N" => Ok(Unit::Newton),
            _ => Err(Error::InvalidInput(format!("unknown unit `{s}`"))),
        }
    }
}

/// Uniformly sampled scalar time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalTrace {
    samples: Vec<f64>,
    fs: f64,
    unit: Unit,
}

impl SignalTrace {
    pub fn new(samples: Vec<f64>, fs: f64, unit: Unit) -> Result<Self> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::InvalidInput(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("signal has no samples".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(SignalTrace { samples, fs, unit })
    }

    /// Builds a trace that shares `fs` and unit with `self`.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        SignalTrace::new(samples, self.fs, self.unit)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// One recording session: a single gait cycle across up to six channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub subject_id: String,
    pub trial_id: String,
    /// Grading scheme name -> grade.
    pub grades: BTreeMap<String, SeverityGrade>,
    /// Optional raw scores per scheme (e.g. the defuzzified degree score).
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    pub channels: BTreeMap<ChannelKind, SignalTrace>,
}

impl Trial {
    pub fn grade(&self, scheme: &str) -> Option<SeverityGrade> {
        self.grades.get(scheme).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubjectInfo {
    pub id: String,
    #[serde(default)]
    pub demographics: BTreeMap<String, f64>,
}

/// Manifest-level metadata.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    /// Declared grading schemes; every trial grade key must be one of these.
    pub schemes: Vec<String>,
    #[serde(default)]
    pub subjects: Vec<SubjectInfo>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub trials: Vec<Trial>,
}

/// A single invariant violation found by [`Dataset::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Issue {
    DuplicateTrialId { trial_id: String },
    LengthMismatch { trial_id: String, channel: ChannelKind, duration_s: f64, expected_s: f64 },
    MissingGrade { trial_id: String },
    UnknownScheme { trial_id: String, scheme: String },
    NoChannels { trial_id: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::DuplicateTrialId { trial_id } => write!(f, "duplicate trial id `{trial_id}`"),
            Issue::LengthMismatch { trial_id, channel, duration_s, expected_s } => write!(
                f,
                "trial `{trial_id}` channel {channel}: duration {duration_s} s differs from {expected_s} s by at least one sample"
            ),
            Issue::MissingGrade { trial_id } => write!(f, "trial `{trial_id}` has no grades"),
            Issue::UnknownScheme { trial_id, scheme } => {
                write!(f, "trial `{trial_id}` uses undeclared grading scheme `{scheme}`")
            }
            Issue::NoChannels { trial_id } => write!(f, "trial `{trial_id}` has no channels"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Channel length check for one trial. Channels are compared with the most
/// common duration so that a single deviating channel yields a single issue.
pub fn trial_length_issues(trial: &Trial) -> Vec<Issue> {
    let mut issues = Vec::new();
    if trial.channels.is_empty() {
        return issues;
    }
    let durations: Vec<(ChannelKind, f64, f64)> =
        trial.channels.iter().map(|(k, t)| (*k, t.duration_s(), t.fs())).collect();
    let max_fs = durations.iter().map(|d| d.2).fold(0.0, f64::max);
    let tol = 1.0 / max_fs;
    let agrees = |a: f64, b: f64| (a - b).abs() < tol * (1.0 - 1e-9);
    // Pick the duration shared by most channels (earliest channel wins ties).
    let reference = durations
        .iter()
        .map(|d| {
            let support = durations.iter().filter(|e| agrees(d.1, e.1)).count();
            (support, d.1)
        })
        .fold((0usize, 0.0f64), |best, cur| if cur.0 > best.0 { cur } else { best })
        .1;
    for (kind, dur, _) in durations {
        if !agrees(dur, reference) {
            issues.push(Issue::LengthMismatch {
                trial_id: trial.trial_id.clone(),
                channel: kind,
                duration_s: dur,
                expected_s: reference,
            });
        }
    }
    issues
}

impl Dataset {
    /// Lists every invariant violation; an empty report means the dataset is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();
        let mut seen: BTreeMap<&str, ()> = BTreeMap::new();
        for trial in &self.trials {
            if seen.insert(trial.trial_id.as_str(), ()).is_some() {
                issues.push(Issue::DuplicateTrialId { trial_id: trial.trial_id.clone() });
            }
            if trial.grades.is_empty() {
                issues.push(Issue::MissingGrade { trial_id: trial.trial_id.clone() });
            }
            for scheme in trial.grades.keys() {
                if !self.meta.schemes.iter().any(|s| s == scheme) {
                    issues.push(Issue::UnknownScheme { trial_id: trial.trial_id.clone(), scheme: scheme.clone() });
                }
            }
            if trial.channels.is_empty() {
                issues.push(Issue::NoChannels { trial_id: trial.trial_id.clone() });
            }
            issues.extend(trial_length_issues(trial));
        }
        ValidationReport { issues }
    }

    /// Trial counts per grade (Absent..Severe) under `scheme`; ungraded trials are ignored.
    pub fn class_counts(&self, scheme: &str) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for t in &self.trials {
            if let Some(g) = t.grade(scheme) {
                counts[g.index()] += 1;
            }
        }
        counts
    }

    /// Distinct subjects per grade under `scheme`.
    pub fn subject_counts(&self, scheme: &str) -> [usize; 4] {
        let mut sets: [BTreeMap<&str, ()>; 4] = Default::default();
        for t in &self.trials {
            if let Some(g) = t.grade(scheme) {
                sets[g.index()].insert(t.subject_id.as_str(), ());
            }
        }
        [sets[0].len(), sets[1].len(), sets[2].len(), sets[3].len()]
    }

    pub fn trial(&self, trial_id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }
}

/// Convenience for tests and generators.
pub fn trace(samples: Vec<f64>, fs: f64, kind: ChannelKind) -> Result<SignalTrace> {
    SignalTrace::new(samples, fs, kind.unit())
}

impl Trial {
    pub fn new(subject_id: &str, trial_id: &str) -> Self {
        Trial {
            subject_id: subject_id.to_string(),
            trial_id: trial_id.to_string(),
            grades: BTreeMap::new(),
            scores: BTreeMap::new(),
            channels: BTreeMap::new(),
        }
    }
}
