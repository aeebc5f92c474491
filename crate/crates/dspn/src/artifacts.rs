//! CSV artifacts written by a run. Every file opens with a version line
//! `# dspn-<kind> v<N>` followed by an ordinary CSV table with a header.
//!
//! | kind       | columns |
//! |------------|---------|
//! | `segments` | `trial_id,channel,segment_index,start,end` (also the override format) |
//! | `features` | `row_key,label,<feature columns...>` |
//! | `ranking`  | `rank,feature,weight,pruned_by` (pruned rows leave rank and weight empty) |
//! | `metrics`  | `k,<metric>_mean,<metric>_std...,auc,features` (features `;`-separated) |
//! | `roc`      | `fpr,tpr` |
//! | `profiles` | `channel,grade,n_trials,index,mean,std` |

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use dspn_core::learn::MetricsReport;
use dspn_core::matrix::FeatureMatrix;
use dspn_core::model::{ChannelKind, SeverityGrade};
use dspn_core::segmentation::{ClassProfile, ProfileSet, SegmentOverride};
use dspn_core::selection::{RankedFeatureList, SearchReport};

use crate::error::{DspnError, Result};

pub const ARTIFACT_VERSION: u32 = 1;

fn version_line(kind: &str) -> String {
    format!("# dspn-{kind} v{ARTIFACT_VERSION}")
}

fn format_err(path: &Path, line: usize, msg: impl Into<String>) -> DspnError {
    DspnError::Format { path: path.into(), line, msg: msg.into() }
}

fn write_table(path: &Path, kind: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", version_line(kind)).expect("write to memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header).expect("write to memory");
        for r in rows {
            w.write_record(&r).expect("write to memory");
        }
        w.flush().expect("write to memory");
    }
    fs::write(path, buf).map_err(|e| DspnError::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, kind: &str, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{}", version_line(kind)).expect("write to memory");
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| format_err(path, 0, e.to_string()))?;
        }
        w.flush().expect("write to memory");
    }
    fs::write(path, buf).map_err(|e| DspnError::io(path, e))
}

/// Reads the file and checks its version line, returning the CSV body.
fn open_table(path: &Path, kind: &str) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| DspnError::io(path, e))?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let expected = version_line(kind);
    if first.trim_end() != expected {
        return Err(format_err(path, 1, format!("expected `{expected}`, found `{}`", first.trim_end())));
    }
    Ok(rest.to_string())
}

fn read_rows<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<Vec<T>> {
    let body = open_table(path, kind)?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    r.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line() as usize + 1);
                format_err(path, line, e.to_string())
            })
        })
        .collect()
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn parse_num(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| format_err(path, line, format!("bad number `{s}`: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SegmentRow {
    trial_id: String,
    channel: String,
    segment_index: usize,
    start: usize,
    end: usize,
}

pub fn write_segments(path: &Path, segments: &[SegmentOverride]) -> Result<()> {
    let rows: Vec<SegmentRow> = segments
        .iter()
        .map(|s| SegmentRow {
            trial_id: s.trial_id.clone(),
            channel: s.channel.name().into(),
            segment_index: s.segment_index,
            start: s.start,
            end: s.end,
        })
        .collect();
    write_rows(path, "segments", &rows)
}

/// Reads a segments file. The same format serves as a reviewed override list.
pub fn read_segments(path: &Path) -> Result<Vec<SegmentOverride>> {
    read_rows::<SegmentRow>(path, "segments")?
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let channel: ChannelKind =
                r.channel.parse().map_err(|e: dspn_core::Error| format_err(path, i + 3, e.to_string()))?;
            Ok(SegmentOverride {
                trial_id: r.trial_id,
                channel,
                segment_index: r.segment_index,
                start: r.start,
                end: r.end,
            })
        })
        .collect()
}

pub fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let mut header = vec!["row_key".to_string(), "label".to_string()];
    header.extend(m.columns().iter().cloned());
    let rows = (0..m.n_rows()).map(|r| {
        let mut rec = vec![m.row_keys()[r].clone(), m.labels()[r].name().to_string()];
        rec.extend(m.row(r).iter().map(|&v| num(v)));
        rec
    });
    write_table(path, "features", &header, rows)
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let body = open_table(path, "features")?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let header = r.headers().map_err(|e| format_err(path, 2, e.to_string()))?.clone();
    if header.len() < 2 || &header[0] != "row_key" || &header[1] != "label" {
        return Err(format_err(path, 2, "header must start with row_key,label"));
    }
    let columns: Vec<String> = header.iter().skip(2).map(String::from).collect();
    let (mut data, mut labels, mut keys) = (Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in r.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| format_err(path, line, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(format_err(path, line, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        keys.push(rec[0].to_string());
        labels.push(rec[1].parse::<SeverityGrade>().map_err(|e| format_err(path, line, e.to_string()))?);
        for f in rec.iter().skip(2) {
            data.push(parse_num(path, line, f)?);
        }
    }
    FeatureMatrix::new(columns, data, labels, keys).map_err(|e| format_err(path, 0, e.to_string()))
}

pub fn write_ranking(path: &Path, ranking: &RankedFeatureList) -> Result<()> {
    let header: Vec<String> = ["rank", "feature", "weight", "pruned_by"].map(String::from).to_vec();
    let kept = ranking
        .order
        .iter()
        .zip(&ranking.weights)
        .enumerate()
        .map(|(i, (f, w))| vec![(i + 1).to_string(), f.clone(), num(*w), String::new()]);
    let pruned = ranking.pruned.iter().map(|(f, by)| vec![String::new(), f.clone(), String::new(), by.clone()]);
    write_table(path, "ranking", &header, kept.chain(pruned))
}

pub fn read_ranking(path: &Path) -> Result<RankedFeatureList> {
    let body = open_table(path, "ranking")?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let mut out =
        RankedFeatureList { order: Vec::new(), weights: Vec::new(), pruned: Vec::new(), warnings: Vec::new() };
    for (i, rec) in r.records().enumerate() {
        let line = i + 3;
        let rec = rec.map_err(|e| format_err(path, line, e.to_string()))?;
        if rec.len() != 4 {
            return Err(format_err(path, line, "expected 4 fields"));
        }
        if rec[0].is_empty() {
            out.pruned.push((rec[1].to_string(), rec[3].to_string()));
        } else {
            if rec[0] != (out.order.len() + 1).to_string() {
                return Err(format_err(path, line, format!("rank {} out of sequence", &rec[0])));
            }
            out.order.push(rec[1].to_string());
            out.weights.push(parse_num(path, line, &rec[2])?);
        }
    }
    Ok(out)
}

/// One row of the per-K metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub k: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub sensitivity_mean: f64,
    pub sensitivity_std: f64,
    pub specificity_mean: f64,
    pub specificity_std: f64,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub auc: Option<f64>,
    pub features: String,
}

impl MetricsRow {
    pub fn new(k: usize, features: &[String], m: &MetricsReport) -> Self {
        MetricsRow {
            k,
            accuracy_mean: m.accuracy.mean,
            accuracy_std: m.accuracy.std,
            sensitivity_mean: m.sensitivity.mean,
            sensitivity_std: m.sensitivity.std,
            specificity_mean: m.specificity.mean,
            specificity_std: m.specificity.std,
            precision_mean: m.precision.mean,
            precision_std: m.precision.std,
            f1_mean: m.f1.mean,
            f1_std: m.f1.std,
            auc: m.auc,
            features: features.join(";"),
        }
    }
}

pub fn write_metrics(path: &Path, search: &SearchReport) -> Result<()> {
    let rows: Vec<MetricsRow> = search.entries.iter().map(|e| MetricsRow::new(e.k, &e.features, &e.metrics)).collect();
    write_rows(path, "metrics", &rows)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    read_rows(path, "metrics")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RocRow {
    fpr: f64,
    tpr: f64,
}

pub fn write_roc(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let rows: Vec<RocRow> = points.iter().map(|&(fpr, tpr)| RocRow { fpr, tpr }).collect();
    write_rows(path, "roc", &rows)
}

pub fn read_roc(path: &Path) -> Result<Vec<(f64, f64)>> {
    Ok(read_rows::<RocRow>(path, "roc")?.into_iter().map(|r| (r.fpr, r.tpr)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProfileRow {
    channel: String,
    grade: String,
    n_trials: usize,
    index: usize,
    mean: f64,
    std: f64,
}

pub fn write_profiles(path: &Path, sets: &[ProfileSet]) -> Result<()> {
    let mut rows = Vec::new();
    for set in sets {
        for p in &set.profiles {
            for (i, (m, s)) in p.mean_curve.iter().zip(&p.std_curve).enumerate() {
                rows.push(ProfileRow {
                    channel: set.channel.name().into(),
                    grade: p.grade.name().into(),
                    n_trials: p.n_trials,
                    index: i,
                    mean: *m,
                    std: *s,
                });
            }
        }
    }
    write_rows(path, "profiles", &rows)
}

pub fn read_profiles(path: &Path) -> Result<Vec<ProfileSet>> {
    let mut sets: Vec<ProfileSet> = Vec::new();
    for (i, r) in read_rows::<ProfileRow>(path, "profiles")?.into_iter().enumerate() {
        let line = i + 3;
        let channel: ChannelKind =
            r.channel.parse().map_err(|e: dspn_core::Error| format_err(path, line, e.to_string()))?;
        let grade: SeverityGrade =
            r.grade.parse().map_err(|e: dspn_core::Error| format_err(path, line, e.to_string()))?;
        if sets.last().is_none_or(|s| s.channel != channel) {
            sets.push(ProfileSet { channel, profiles: Vec::new(), warnings: Vec::new() });
        }
        let set = sets.last_mut().expect("pushed above");
        if set.profiles.last().is_none_or(|p| p.grade != grade) {
            set.profiles.push(ClassProfile {
                grade,
                mean_curve: Vec::new(),
                std_curve: Vec::new(),
                n_trials: r.n_trials,
            });
        }
        let p = set.profiles.last_mut().expect("pushed above");
        if r.index != p.mean_curve.len() {
            return Err(format_err(path, line, format!("index {} out of sequence", r.index)));
        }
        p.mean_curve.push(r.mean);
        p.std_curve.push(r.std);
    }
    Ok(sets)
}

/// Writes a serde value as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serialises");
    fs::write(path, text + "\n").map_err(|e| DspnError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| DspnError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.line(), e.to_string()))
}
