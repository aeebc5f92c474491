//! Dataset manifests and signal files.
//!
//! A manifest is one JSON document:
//!
//! ```json
//! {
//!   "format": "dspn-manifest",
//!   "version": 1,
//!   "name": "synthetic-seed7",
//!   "schemes": ["synthetic-truth"],
//!   "subjects": [{ "id": "absent-s00", "demographics": { "body_mass_kg": 71.2 } }],
//!   "trials": [{
//!     "trial_id": "absent-s00-t00",
//!     "subject_id": "absent-s00",
//!     "grades": { "synthetic-truth": "Absent" },
//!     "scores": { "synthetic-truth": 1.7 },
//!     "channels": { "GM": "signals/0000_absent-s00-t00_GM.csv" }
//!   }]
//! }
//! ```
//!
//! Channel paths are relative to the manifest. A signal file starts with
//! `# fs=<Hz> unit=<V|N>` followed by one sample per line; lines of the
//! form `index,value` are also accepted.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dspn_core::model::{
    ChannelKind, Dataset, DatasetMeta, Issue, SeverityGrade, SignalTrace, SubjectInfo, Trial, Unit,
};

use crate::error::{DspnError, Result};

pub const MANIFEST_FORMAT: &str = "dspn-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed manifest: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("trial `{trial_id}`: signal file {path} does not exist")]
    MissingSignal { trial_id: String, path: PathBuf },
    #[error("{path}:{line}: {msg}")]
    Signal { path: PathBuf, line: usize, msg: String },
    #[error("duplicate trial id `{0}`")]
    DuplicateTrial(String),
    #[error("{0}")]
    LengthMismatch(String),
    #[error("trial `{trial_id}` uses undeclared grading scheme `{scheme}`")]
    UnknownScheme { trial_id: String, scheme: String },
    #[error("trial `{trial_id}`: {msg}")]
    Invalid { trial_id: String, msg: String },
}

impl LoadError {
    pub fn is_io(&self) -> bool {
        matches!(self, LoadError::Io { .. } | LoadError::MissingSignal { .. })
    }
}

impl From<Issue> for LoadError {
    fn from(issue: Issue) -> Self {
        match issue {
            Issue::DuplicateTrialId { trial_id } => LoadError::DuplicateTrial(trial_id),
            Issue::UnknownScheme { trial_id, scheme } => LoadError::UnknownScheme { trial_id, scheme },
            i @ Issue::LengthMismatch { .. } => LoadError::LengthMismatch(i.to_string()),
            Issue::MissingGrade { trial_id } => LoadError::Invalid { trial_id, msg: "no grades".into() },
            Issue::NoChannels { trial_id } => LoadError::Invalid { trial_id, msg: "no channels".into() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub schemes: Vec<String>,
    #[serde(default)]
    pub subjects: Vec<SubjectInfo>,
    pub trials: Vec<ManifestTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTrial {
    pub trial_id: String,
    pub subject_id: String,
    pub grades: BTreeMap<String, SeverityGrade>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    /// Channel label (`GM`, `GRFz`, ...) to signal file path.
    pub channels: BTreeMap<String, PathBuf>,
}

fn write_value(out: &mut impl Write, v: f64) -> std::io::Result<()> {
    // Debug formatting is the shortest string that parses back to the same bits.
    writeln!(out, "{v:?}")
}

/// Writes a signal file: the `# fs=.. unit=..` header, then one sample per line.
pub fn write_signal(path: &Path, trace: &SignalTrace) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| DspnError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut go = || -> std::io::Result<()> {
        writeln!(out, "# fs={:?} unit={}", trace.fs(), trace.unit().symbol())?;
        for &v in trace.samples() {
            write_value(&mut out, v)?;
        }
        out.flush()
    };
    go().map_err(|e| DspnError::io(path, e))
}

pub fn read_signal(path: &Path) -> std::result::Result<SignalTrace, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io { path: path.into(), source })?;
    let bad = |line: usize, msg: String| LoadError::Signal { path: path.into(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty signal file".into()))?;
    let header =
        header.trim().strip_prefix('#').ok_or_else(|| bad(1, "missing `# fs=<Hz> unit=<V|N>` header".into()))?;
    let (mut fs_hz, mut unit) = (None, None);
    for field in header.split_whitespace() {
        match field.split_once('=') {
            Some(("fs", v)) => fs_hz = Some(v.parse::<f64>().map_err(|e| bad(1, format!("bad fs `{v}`: {e}")))?),
            Some(("unit", v)) => unit = Some(v.parse::<Unit>().map_err(|e| bad(1, e.to_string()))?),
            _ => return Err(bad(1, format!("unexpected header field `{field}`"))),
        }
    }
    let fs_hz = fs_hz.ok_or_else(|| bad(1, "header lacks fs".into()))?;
    let unit = unit.ok_or_else(|| bad(1, "header lacks unit".into()))?;
    let mut samples = Vec::new();
    for (i, l) in lines {
        let field = l.rsplit(',').next().unwrap_or(l).trim();
        let v = field.parse::<f64>().map_err(|e| bad(i + 1, format!("bad sample `{field}`: {e}")))?;
        samples.push(v);
    }
    SignalTrace::new(samples, fs_hz, unit).map_err(|e| bad(1, e.to_string()))
}

/// Loads a manifest and every referenced signal, then checks dataset
/// invariants. The first violation found is returned as an error.
pub fn load_dataset(manifest_path: &Path) -> std::result::Result<Dataset, LoadError> {
    let text =
        fs::read_to_string(manifest_path).map_err(|source| LoadError::Io { path: manifest_path.into(), source })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| LoadError::Manifest { path: manifest_path.into(), msg: e.to_string() })?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
        return Err(LoadError::Manifest {
            path: manifest_path.into(),
            msg: format!(
                "expected format `{MANIFEST_FORMAT}` version {MANIFEST_VERSION}, found `{}` version {}",
                manifest.format, manifest.version
            ),
        });
    }
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for mt in manifest.trials {
        let mut trial = Trial::new(&mt.subject_id, &mt.trial_id);
        trial.grades = mt.grades;
        trial.scores = mt.scores;
        for (label, rel) in &mt.channels {
            let kind: ChannelKind = label.parse().map_err(|e: dspn_core::Error| LoadError::Invalid {
                trial_id: mt.trial_id.clone(),
                msg: e.to_string(),
            })?;
            let path = root.join(rel);
            if !path.exists() {
                return Err(LoadError::MissingSignal { trial_id: mt.trial_id.clone(), path });
            }
            trial.channels.insert(kind, read_signal(&path)?);
        }
        trials.push(trial);
    }
    let dataset = Dataset {
        meta: DatasetMeta { name: manifest.name, schemes: manifest.schemes, subjects: manifest.subjects },
        trials,
    };
    if let Some(issue) = dataset.validate().issues.into_iter().next() {
        return Err(issue.into());
    }
    for scheme in &dataset.meta.schemes {
        let c = dataset.class_counts(scheme);
        log::info!(
            "{}: {} trials under `{scheme}` (Absent {}, Mild {}, Moderate {}, Severe {})",
            dataset.meta.name,
            dataset.trials.len(),
            c[0],
            c[1],
            c[2],
            c[3]
        );
    }
    Ok(dataset)
}

fn file_stem(index: usize, trial_id: &str, channel: ChannelKind) -> String {
    let safe: String = trial_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect();
    format!("{index:04}_{safe}_{}.csv", channel.name())
}

/// Writes `manifest.json` plus one signal file per channel under
/// `dir/signals`, returning the manifest path.
pub fn write_fixture(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    let signals = dir.join("signals");
    fs::create_dir_all(&signals).map_err(|e| DspnError::io(&signals, e))?;
    let mut trials = Vec::with_capacity(dataset.trials.len());
    for (i, t) in dataset.trials.iter().enumerate() {
        let mut channels = BTreeMap::new();
        for (&kind, trace) in &t.channels {
            let rel = PathBuf::from("signals").join(file_stem(i, &t.trial_id, kind));
            write_signal(&dir.join(&rel), trace)?;
            channels.insert(kind.name().to_string(), rel);
        }
        trials.push(ManifestTrial {
            trial_id: t.trial_id.clone(),
            subject_id: t.subject_id.clone(),
            grades: t.grades.clone(),
            scores: t.scores.clone(),
            channels,
        });
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        name: dataset.meta.name.clone(),
        schemes: dataset.meta.schemes.clone(),
        subjects: dataset.meta.subjects.clone(),
        trials,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    fs::write(&path, json + "\n").map_err(|e| DspnError::io(&path, e))?;
    Ok(path)
}
