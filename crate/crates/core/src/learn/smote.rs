//! SMOTE oversampling to the majority class count.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)] // std-linked builds resolve the inherent methods instead
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{FeatureMatrix, SYNTHETIC_PREFIX};
use crate::model::SeverityGrade;
use crate::rng::{rng_for, tag};

#[derive(Debug, Clone, PartialEq)]
pub struct Balanced {
    /// Original rows first, in input order, then synthetic rows by class.
    pub matrix: FeatureMatrix,
    pub warnings: Vec<String>,
}

/// Oversamples every class to the largest class count. Each synthetic row
/// is `x + u (x_nn - x)` with `u ~ U[0, 1)` and `x_nn` one of the `k`
/// nearest same-class rows. Neighbours are found on z-scored features so
/// that large-magnitude columns do not dominate the distance.
pub fn smote_balance(m: &FeatureMatrix, k: usize, seed: u64) -> Result<Balanced> {
    if k == 0 {
        return Err(Error::Parameter("SMOTE k must be at least 1".into()));
    }
    let counts = m.class_counts();
    let target = counts.iter().copied().max().unwrap_or(0);
    let p = m.n_cols();
    let mut warnings = Vec::new();

    let n = m.n_rows();
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let col = m.column(j);
        let mean = col.iter().sum::<f64>() / n.max(1) as f64;
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64).sqrt();
        scale.push((mean, if sd > 0.0 { sd } else { 1.0 }));
    }
    let z = |r: usize| -> Vec<f64> { m.row(r).iter().zip(&scale).map(|(v, (mu, sd))| (v - mu) / sd).collect() };

    let mut out = m.clone();
    for grade in SeverityGrade::ALL {
        let c = grade.index();
        let need = target - counts[c];
        if counts[c] == 0 || need == 0 {
            continue;
        }
        if counts[c] == 1 {
            return Err(Error::CannotBalance { class: grade });
        }
        let kk = k.min(counts[c] - 1);
        if kk < k {
            let msg = format!("SMOTE: class {grade} has {} rows; k clamped to {kk}", counts[c]);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let mut rows: Vec<usize> = (0..n).filter(|&r| m.labels()[r] == grade).collect();
        rows.sort_by(|&a, &b| m.row_keys()[a].cmp(&m.row_keys()[b]));
        let zs: Vec<Vec<f64>> = rows.iter().map(|&r| z(r)).collect();
        let neighbours: Vec<Vec<usize>> = (0..rows.len())
            .map(|i| {
                let mut d: Vec<(f64, usize)> = (0..rows.len())
                    .filter(|&j| j != i)
                    .map(|j| (zs[i].iter().zip(&zs[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), j))
                    .collect();
                d.sort_by(|a, b| a.0.total_cmp(&b.0));
                d.into_iter().take(kk).map(|(_, j)| j).collect()
            })
            .collect();

        let mut rng = rng_for(seed, &[tag::SMOTE, c as u64]);
        let mut synth = Vec::with_capacity(p);
        for s in 0..need {
            let i = s % rows.len();
            let j = neighbours[i][rng.random_range(0..kk)];
            let u: f64 = rng.random();
            let (x, y) = (m.row(rows[i]), m.row(rows[j]));
            synth.clear();
            synth.extend(x.iter().zip(y).map(|(&a, &b)| (a + u * (b - a)).clamp(a.min(b), a.max(b))));
            let key = format!("{SYNTHETIC_PREFIX}{}:{}:{s}", grade.name(), m.row_keys()[rows[i]]);
            out.push_row(&synth, grade, key);
        }
    }
    Ok(Balanced { matrix: out, warnings })
}
