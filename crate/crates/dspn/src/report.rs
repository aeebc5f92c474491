//! Run report JSON and cross-run comparison tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use dspn_core::learn::{CvConfig, TrainerSpec};
use dspn_core::selection::{SearchEntry, SearchReport};

use crate::error::{DspnError, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub dataset: String,
    pub scheme: String,
    pub family: String,
    pub combo: String,
    pub trainer: TrainerSpec,
    pub cv: CvConfig,
    pub n_trials: usize,
    pub n_rows: usize,
    pub class_counts: [usize; 4],
    /// `(trial_id, reason)` for trials left out of the matrix.
    pub skipped: Vec<(String, String)>,
    pub warnings: Vec<String>,
    pub features_total: usize,
    /// `(pruned feature, surviving partner)`.
    pub pruned: Vec<(String, String)>,
    /// Surviving features with ReliefF weights, best first.
    pub ranking: Vec<(String, f64)>,
    pub search: SearchReport,
    pub best: SearchEntry,
}

impl RunReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DspnError::io(path, e))?;
        let bad = |line: usize, msg: String| DspnError::Format { path: path.into(), line, msg };
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| bad(e.line(), e.to_string()))?;
        let version = value.get("schema_version").and_then(serde_json::Value::as_u64);
        if version != Some(u64::from(REPORT_SCHEMA_VERSION)) {
            return Err(bad(
                1,
                format!(
                    "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                    version.map_or_else(|| "missing".to_string(), |v| v.to_string())
                ),
            ));
        }
        serde_json::from_value(value).map_err(|e| bad(0, e.to_string()))
    }

    /// Fixed-width table of mean ± std per K with the best K starred.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} | {} | scheme {} | {} rows",
            self.family,
            self.combo,
            self.trainer.name(),
            self.scheme,
            self.n_rows
        );
        let _ = writeln!(
            out,
            "  {:>3}  {:>14}  {:>14}  {:>14}  {:>14}  {:>14}  {:>6}",
            "K", "Accuracy", "Sensitivity", "Specificity", "Precision", "F1", "AUC"
        );
        for e in &self.search.entries {
            let m = &e.metrics;
            let cell = |ms: dspn_core::learn::metrics::MeanStd| format!("{:.2} ± {:.2}", ms.mean, ms.std);
            let _ = writeln!(
                out,
                "{} {:>3}  {:>14}  {:>14}  {:>14}  {:>14}  {:>14}  {:>6}",
                if e.k == self.search.best_k { '*' } else { ' ' },
                e.k,
                cell(m.accuracy),
                cell(m.sensitivity),
                cell(m.specificity),
                cell(m.precision),
                cell(m.f1),
                m.auc.map_or_else(|| "-".to_string(), |a| format!("{a:.3}")),
            );
        }
        out
    }
}

/// Side-by-side best-K accuracy per channel combination. Columns are named
/// by grading scheme, with the learner appended when two runs share one.
pub fn comparison_csv(reports: &[RunReport]) -> String {
    let mut labels: Vec<String> = Vec::new();
    let mut run_labels = Vec::with_capacity(reports.len());
    for r in reports {
        let mut label = r.scheme.clone();
        if labels.contains(&label) {
            label = format!("{}/{}", r.scheme, r.trainer.name());
        }
        let base = label.clone();
        let mut n = 2;
        while labels.contains(&label) {
            label = format!("{base}#{n}");
            n += 1;
        }
        labels.push(label.clone());
        run_labels.push(label);
    }
    let mut rows: BTreeMap<(String, String), BTreeMap<&str, &RunReport>> = BTreeMap::new();
    for (r, label) in reports.iter().zip(&run_labels) {
        rows.entry((r.family.clone(), r.combo.clone())).or_default().insert(label, r);
    }
    let mut out = String::from("# dspn-comparison v1\nfamily,combo");
    for l in &labels {
        let _ = write!(out, ",{l},{l}_std,{l}_k");
    }
    out.push('\n');
    for ((family, combo), by_label) in rows {
        let _ = write!(out, "{family},{combo}");
        for l in &labels {
            match by_label.get(l.as_str()) {
                Some(r) => {
                    let a = r.best.metrics.accuracy;
                    let _ = write!(out, ",{:?},{:?},{}", a.mean, a.std, r.best.k);
                }
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}
