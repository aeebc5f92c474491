//! Correlation pruning, ReliefF ranking and incremental top-K search.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use serde::{Deserialize, Serialize};

pub use crate::matrix::FeatureMatrix;

use crate::error::{Error, Result};
use crate::features::{extract_matrix, FeatureConfig, SegmentedTrial};
use crate::learn::metrics::MetricsReport;
use crate::model::{combo_family, ChannelFamily, ChannelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub correlation_threshold: f64,
    pub k_neighbors: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig { correlation_threshold: 0.9, k_neighbors: 10 }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.correlation_threshold > 0.0 && self.correlation_threshold <= 1.0) {
            return Err(Error::Parameter(format!(
                "correlation_threshold must be in (0, 1], got {}",
                self.correlation_threshold
            )));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Parameter("k_neighbors must be at least 1".into()));
        }
        Ok(())
    }
}

/// Pearson correlation matrix, row-major `n_cols x n_cols`. Correlation
/// against a zero-variance column is 0; the diagonal is always 1.
pub fn correlation_matrix(m: &FeatureMatrix) -> Result<Vec<f64>> {
    let (n, p) = (m.n_rows(), m.n_cols());
    if n < 2 {
        return Err(Error::InvalidInput(format!("correlation needs at least 2 rows, got {n}")));
    }
    let centred: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c = m.column(j);
            let mean = c.iter().sum::<f64>() / n as f64;
            c.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = centred.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut r = vec![0.0; p * p];
    for i in 0..p {
        r[i * p + i] = 1.0;
        for j in i + 1..p {
            let v = if norms[i] > 0.0 && norms[j] > 0.0 {
                let dot: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
                (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            r[i * p + j] = v;
            r[j * p + i] = v;
        }
    }
    Ok(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub kept: FeatureMatrix,
    /// `(pruned column, kept column it correlated with)`.
    pub pruned: Vec<(String, String)>,
}

/// Greedy scan over pairs `i < j` in column order: a kept column `i` prunes
/// every later column `j` with `|r_ij| >= threshold`.
pub fn prune_correlated(m: &FeatureMatrix, threshold: f64) -> Result<Pruned> {
    let r = correlation_matrix(m)?;
    let p = m.n_cols();
    let mut partner: Vec<Option<usize>> = vec![None; p];
    for i in 0..p {
        if partner[i].is_some() {
            continue;
        }
        for j in i + 1..p {
            if partner[j].is_none() && r[i * p + j].abs() >= threshold {
                partner[j] = Some(i);
            }
        }
    }
    let keep: Vec<usize> = (0..p).filter(|&j| partner[j].is_none()).collect();
    let pruned = (0..p).filter_map(|j| partner[j].map(|i| (m.columns()[j].clone(), m.columns()[i].clone()))).collect();
    Ok(Pruned { kept: m.select_columns(&keep)?, pruned })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeatureList {
    /// Column names, best first.
    pub order: Vec<String>,
    /// ReliefF weight of each entry of `order`.
    pub weights: Vec<f64>,
    /// `(pruned column, surviving partner)`.
    pub pruned: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl RankedFeatureList {
    pub fn top(&self, k: usize) -> &[String] {
        &self.order[..k.min(self.order.len())]
    }
}

/// Exhaustive multiclass ReliefF with Manhattan distance on min-max scaled
/// features. Rows are visited in row-key order and neighbour ties are
/// broken by row key, so weights do not depend on row order.
pub fn relieff_weights(m: &FeatureMatrix, k_neighbors: usize) -> Result<(Vec<f64>, Vec<String>)> {
    let (n, p) = (m.n_rows(), m.n_cols());
    if n < 2 {
        return Err(Error::InvalidInput(format!("ReliefF needs at least 2 rows, got {n}")));
    }
    if k_neighbors == 0 {
        return Err(Error::Parameter("k_neighbors must be at least 1".into()));
    }
    let counts = m.class_counts();
    let mut warnings = Vec::new();
    let mut k_hit = [0usize; 4];
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            continue;
        }
        if cnt == 1 {
            return Err(Error::NeighbourClamp { class: crate::model::SeverityGrade::ALL[c] });
        }
        k_hit[c] = k_neighbors.min(cnt - 1);
        if k_hit[c] < k_neighbors {
            let msg = format!(
                "ReliefF: class {} has {cnt} rows; k clamped to {}",
                crate::model::SeverityGrade::ALL[c],
                k_hit[c]
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    if counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::InvalidInput("ReliefF needs at least two classes".into()));
    }

    let (mut lo, mut hi) = (vec![f64::INFINITY; p], vec![f64::NEG_INFINITY; p]);
    for r in 0..n {
        for (j, &v) in m.row(r).iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    let scaled: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            m.row(r)
                .iter()
                .enumerate()
                .map(|(j, &v)| if hi[j] > lo[j] { (v - lo[j]) / (hi[j] - lo[j]) } else { 0.0 })
                .collect()
        })
        .collect();
    let labels = m.labels();
    let keys = m.row_keys();
    let mut visit: Vec<usize> = (0..n).collect();
    visit.sort_by(|&a, &b| keys[a].cmp(&keys[b]).then(a.cmp(&b)));
    let prior: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();

    let mut w = vec![0.0; p];
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &r in &visit {
        let cr = labels[r].index();
        dist.clear();
        for &o in &visit {
            if o != r {
                let d: f64 = scaled[r].iter().zip(&scaled[o]).map(|(a, b)| (a - b).abs()).sum();
                dist.push((d, o));
            }
        }
        // `visit` is already key-ordered, so a stable sort keeps key order on ties.
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut taken = [0usize; 4];
        let mut contrib = vec![0.0; p];
        for &(_, o) in dist.iter() {
            let co = labels[o].index();
            let limit = if co == cr { k_hit[cr] } else { k_neighbors.min(counts[co]) };
            if taken[co] >= limit {
                continue;
            }
            taken[co] += 1;
            let scale = if co == cr { -1.0 / k_hit[cr] as f64 } else { prior[co] / (1.0 - prior[cr]) / limit as f64 };
            for (c, (a, b)) in contrib.iter_mut().zip(scaled[r].iter().zip(&scaled[o])) {
                *c += scale * (a - b).abs();
            }
        }
        for (wj, c) in w.iter_mut().zip(contrib) {
            *wj += c / n as f64;
        }
    }
    Ok((w, warnings))
}

pub fn relieff_rank(m: &FeatureMatrix, k_neighbors: usize) -> Result<RankedFeatureList> {
    let (w, warnings) = relieff_weights(m, k_neighbors)?;
    let mut idx: Vec<usize> = (0..m.n_cols()).collect();
    idx.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    Ok(RankedFeatureList {
        order: idx.iter().map(|&j| m.columns()[j].clone()).collect(),
        weights: idx.iter().map(|&j| w[j]).collect(),
        pruned: Vec::new(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStudy {
    pub combo: Vec<ChannelKind>,
    /// Extracted matrix before pruning.
    pub full: FeatureMatrix,
    pub pruned: FeatureMatrix,
    pub ranking: RankedFeatureList,
    pub skipped: Vec<(String, String)>,
}

/// Extraction, correlation pruning and ReliefF ranking for one channel
/// combination. Pruning runs first so duplicates do not share rank.
pub fn assemble_channel_study(
    trials: &[SegmentedTrial],
    family: ChannelFamily,
    combo: &[ChannelKind],
    features: &FeatureConfig,
    selection: &SelectionConfig,
) -> Result<ChannelStudy> {
    selection.validate()?;
    let fam = combo_family(combo)?;
    if fam != family {
        return Err(Error::InvalidInput(format!("channel combination is {fam} but the study family is {family}")));
    }
    let extraction = extract_matrix(trials, combo, features)?;
    let full = extraction.matrix;
    let Pruned { kept, pruned } = prune_correlated(&full, selection.correlation_threshold)?;
    let mut ranking = relieff_rank(&kept, selection.k_neighbors)?;
    ranking.pruned = pruned;
    Ok(ChannelStudy { combo: combo.to_vec(), full, pruned: kept, ranking, skipped: extraction.skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchEntry {
    pub k: usize,
    pub features: Vec<String>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub entries: Vec<SearchEntry>,
    pub best_k: usize,
}

impl SearchReport {
    /// Best K maximises mean fold accuracy; ties go to the smaller K.
    pub fn from_entries(entries: Vec<SearchEntry>) -> Result<SearchReport> {
        let best_k = entries
            .iter()
            .fold(None::<&SearchEntry>, |best, e| match best {
                Some(b)
                    if b.metrics.accuracy.mean > e.metrics.accuracy.mean
                        || (b.metrics.accuracy.mean == e.metrics.accuracy.mean && b.k < e.k) =>
                {
                    Some(b)
                }
                _ => Some(e),
            })
            .ok_or_else(|| Error::InvalidInput("incremental search produced no entries".into()))?
            .k;
        Ok(SearchReport { entries, best_k })
    }

    pub fn best(&self) -> &SearchEntry {
        self.entries.iter().find(|e| e.k == self.best_k).expect("best_k names an entry")
    }
}

/// Column subset holding the top `k` ranked features, in rank order.
pub fn top_k_matrix(m: &FeatureMatrix, ranked: &RankedFeatureList, k: usize) -> Result<FeatureMatrix> {
    if k == 0 || k > ranked.order.len() {
        return Err(Error::Parameter(format!("K = {k} outside 1..={}", ranked.order.len())));
    }
    m.select_named(ranked.top(k))
}

/// Builds the report from per-K results given in K order starting at 1.
pub fn search_report(ranked: &RankedFeatureList, metrics: Vec<MetricsReport>) -> Result<SearchReport> {
    let entries = metrics
        .into_iter()
        .enumerate()
        .map(|(i, metrics)| SearchEntry { k: i + 1, features: ranked.top(i + 1).to_vec(), metrics })
        .collect();
    SearchReport::from_entries(entries)
}

/// Runs `evaluate` on the top-K subset for K = 1..=max_k (all ranked
/// features when `max_k` is `None`).
pub fn incremental_search<F>(
    m: &FeatureMatrix,
    ranked: &RankedFeatureList,
    max_k: Option<usize>,
    mut evaluate: F,
) -> Result<SearchReport>
where
    F: FnMut(usize, &FeatureMatrix) -> Result<MetricsReport>,
{
    if ranked.order.is_empty() {
        return Err(Error::InvalidInput("ranking is empty".into()));
    }
    let kmax = max_k.unwrap_or(ranked.order.len()).clamp(1, ranked.order.len());
    let mut metrics = Vec::with_capacity(kmax);
    for k in 1..=kmax {
        metrics.push(evaluate(k, &top_k_matrix(m, ranked, k)?)?);
    }
    search_report(ranked, metrics)
}
