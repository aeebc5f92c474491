//! Labelled feature matrix shared by selection and learning.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SeverityGrade;

/// Row keys of SMOTE rows start with this prefix.
pub const SYNTHETIC_PREFIX: &str = "smote:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    columns: Vec<String>,
    data: Vec<f64>,
    labels: Vec<SeverityGrade>,
    row_keys: Vec<String>,
}

impl FeatureMatrix {
    /// `data` is row-major, `labels.len()` rows by `columns.len()` columns.
    pub fn new(
        columns: Vec<String>,
        data: Vec<f64>,
        labels: Vec<SeverityGrade>,
        row_keys: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != row_keys.len() {
            return Err(Error::InvalidInput(format!("{} labels for {} row keys", labels.len(), row_keys.len())));
        }
        if data.len() != labels.len() * columns.len() {
            return Err(Error::InvalidInput(format!(
                "data has {} values, expected {} x {}",
                data.len(),
                labels.len(),
                columns.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate column name {c}")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let nc = columns.len().max(1);
            return Err(Error::InvalidInput(format!(
                "non-finite value at row {} column {}",
                pos / nc,
                columns.get(pos % nc).map_or("?", |s| s.as_str())
            )));
        }
        Ok(FeatureMatrix { columns, data, labels, row_keys })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn labels(&self) -> &[SeverityGrade] {
        &self.labels
    }

    pub fn row_keys(&self) -> &[String] {
        &self.row_keys
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let nc = self.n_cols();
        &self.data[i * nc..(i + 1) * nc]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.n_cols() + col]
    }

    pub fn column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, col)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn is_synthetic(&self, row: usize) -> bool {
        self.row_keys[row].starts_with(SYNTHETIC_PREFIX)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<FeatureMatrix> {
        if let Some(&c) = cols.iter().find(|&&c| c >= self.n_cols()) {
            return Err(Error::InvalidInput(format!("column index {c} out of range")));
        }
        let columns = cols.iter().map(|&c| self.columns[c].clone()).collect();
        let mut data = Vec::with_capacity(self.n_rows() * cols.len());
        for r in 0..self.n_rows() {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix::new(columns, data, self.labels.clone(), self.row_keys.clone())
    }

    pub fn select_named<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureMatrix> {
        let idx = names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown column {}", n.as_ref())))
            })
            .collect::<Result<Vec<_>>>()?;
        self.select_columns(&idx)
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            columns: self.columns.clone(),
            data,
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            row_keys: rows.iter().map(|&r| self.row_keys[r].clone()).collect(),
        }
    }

    /// Appends rows; the caller guarantees finiteness and matching width.
    pub(crate) fn push_row(&mut self, values: &[f64], label: SeverityGrade, key: String) {
        debug_assert_eq!(values.len(), self.n_cols());
        self.data.extend_from_slice(values);
        self.labels.push(label);
        self.row_keys.push(key);
    }

    pub fn class_counts(&self) -> [usize; 4] {
        let mut c = [0; 4];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    /// FNV-1a over the ordered column names; models refuse matrices whose
    /// hash differs from the one they were trained on.
    pub fn schema_hash(&self) -> u64 {
        schema_hash(&self.columns)
    }
}

pub fn schema_hash<S: AsRef<str>>(columns: &[S]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for c in columns {
        for &b in c.as_ref().as_bytes().iter().chain(core::iter::once(&0u8)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
