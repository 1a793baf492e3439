use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::schema::{FeatureKind, FeatureSchema};
use crate::{Error, Result};

/// One model input column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    /// Index of the source feature in the schema.
    pub feature: usize,
    /// Category index for one-hot columns.
    pub category: Option<usize>,
}

/// Maps schema features to model columns: ordinal features pass through,
/// categorical features expand to one indicator column per category.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    columns: Vec<Column>,
    fingerprint: String,
}

/// Dense row-major model input. Missing cells are `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn set_column(&mut self, j: usize, value: f64) {
        for i in 0..self.n_rows {
            self.values[i * self.n_cols + j] = value;
        }
    }
}

impl Encoding {
    pub fn new(schema: &FeatureSchema) -> Self {
        let mut columns = Vec::new();
        for (j, f) in schema.features.iter().enumerate() {
            match &f.kind {
                FeatureKind::Ordinal { .. } => columns.push(Column {
                    name: f.name.clone(),
                    feature: j,
                    category: None,
                }),
                FeatureKind::Categorical { values } => {
                    for (k, v) in values.iter().enumerate() {
                        columns.push(Column {
                            name: format!("{}={}", f.name, v),
                            feature: j,
                            category: Some(k),
                        });
                    }
                }
            }
        }
        Self {
            columns,
            fingerprint: schema.fingerprint(),
        }
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Model column of an ordinal schema feature.
    pub fn ordinal_column(&self, feature: usize) -> Option<usize> {
        self.columns
            .iter()
            .position(|c| c.feature == feature && c.category.is_none())
    }

    pub fn encode(&self, data: &Dataset) -> Result<FeatureMatrix> {
        let found = data.schema().fingerprint();
        if found != self.fingerprint {
            return Err(Error::SchemaMismatch {
                expected: self.fingerprint.clone(),
                found,
            });
        }
        let n_cols = self.columns.len();
        let mut values = Vec::with_capacity(data.len() * n_cols);
        for row in data.rows() {
            for col in &self.columns {
                let cell = row[col.feature];
                values.push(match col.category {
                    None => cell.unwrap_or(f64::NAN),
                    Some(k) => {
                        if cell == Some(k as f64) {
                            1.0
                        } else {
                            0.0
                        }
                    }
                });
            }
        }
        Ok(FeatureMatrix {
            n_rows: data.len(),
            n_cols,
            values,
        })
    }

    /// Inverse of [`encode`](Self::encode) on the raw cell representation.
    pub fn decode(&self, m: &FeatureMatrix, n_features: usize) -> Result<Vec<Vec<Option<f64>>>> {
        if m.n_cols != self.columns.len() {
            return Err(Error::LengthMismatch {
                left: m.n_cols,
                right: self.columns.len(),
            });
        }
        let mut rows = Vec::with_capacity(m.n_rows);
        for i in 0..m.n_rows {
            let mut row = vec![None; n_features];
            for (j, col) in self.columns.iter().enumerate() {
                let v = m.get(i, j);
                match col.category {
                    None => row[col.feature] = if v.is_nan() { None } else { Some(v) },
                    Some(k) => {
                        if v == 1.0 {
                            if row[col.feature].is_some() {
                                return Err(Error::InvalidArgument(format!(
                                    "row {i}: more than one hot category for feature {}",
                                    col.feature
                                )));
                            }
                            row[col.feature] = Some(k as f64);
                        }
                    }
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }
}
