use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use super::schema::{FeatureKind, FeatureSchema, NAN_CATEGORY};
use crate::{Error, Result};

/// Raw tabular data in schema order.
///
/// Ordinal cells hold their numeric code or `None` when missing. Categorical
/// cells hold the index of their category; missing categoricals point at the
/// `nan` sentinel, so they are never `None`.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<FeatureSchema>,
    rows: Vec<Vec<Option<f64>>>,
    labels: Vec<u8>,
    row_ids: Vec<String>,
}

impl Dataset {
    pub fn new(
        schema: Arc<FeatureSchema>,
        rows: Vec<Vec<Option<f64>>>,
        labels: Vec<u8>,
        row_ids: Vec<String>,
    ) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: labels.len(),
            });
        }
        if rows.len() != row_ids.len() {
            return Err(Error::LengthMismatch {
                left: rows.len(),
                right: row_ids.len(),
            });
        }
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {i} has {} cells, schema declares {}",
                    row.len(),
                    schema.len()
                )));
            }
            for (cell, spec) in row.iter().zip(&schema.features) {
                if let FeatureKind::Categorical { values } = &spec.kind {
                    match cell {
                        Some(c) if c.fract() == 0.0 && *c >= 0.0 && (*c as usize) < values.len() => {}
                        _ => {
                            return Err(Error::InvalidArgument(format!(
                                "row {i}: categorical `{}` must index a declared category",
                                spec.name
                            )))
                        }
                    }
                }
            }
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
        }
        let d = Dataset {
            schema,
            rows,
            labels,
            row_ids,
        };
        let (neg, pos) = d.class_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::SingleClass {
                positives: pos,
                negatives: neg,
            });
        }
        Ok(d)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> &Arc<FeatureSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<Option<f64>>] {
        &self.rows
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    /// `(negatives, positives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn column(&self, feature: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        self.rows.iter().map(move |r| r[feature])
    }

    /// Human-readable cell value (`missing` for absent ordinal cells).
    pub fn display_value(&self, row: usize, feature: usize) -> String {
        let spec = &self.schema.features[feature];
        match (&spec.kind, self.rows[row][feature]) {
            (FeatureKind::Categorical { values }, Some(c)) => values[c as usize].clone(),
            (_, Some(v)) => format!("{v}"),
            (_, None) => "missing".to_string(),
        }
    }

    /// Rows at `indices`, in the given order. Fails if the selection drops a class.
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.schema.clone(),
            indices.iter().map(|&i| self.rows[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
        )
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let id_col = self.schema.id_column.clone().unwrap_or_else(|| "row_id".into());
        let mut header = vec![id_col];
        header.extend(self.schema.features.iter().map(|f| f.name.clone()));
        header.push(self.schema.label.clone());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = Vec::with_capacity(header.len());
            rec.push(self.row_ids[i].clone());
            for (j, spec) in self.schema.features.iter().enumerate() {
                rec.push(match (&spec.kind, self.rows[i][j]) {
                    (FeatureKind::Categorical { values }, Some(c)) => {
                        let v = &values[c as usize];
                        if v == NAN_CATEGORY {
                            String::new()
                        } else {
                            v.clone()
                        }
                    }
                    (_, Some(v)) => format!("{v}"),
                    (_, None) => String::new(),
                });
            }
            rec.push(self.labels[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Reads a UTF-8 CSV with a header row. Empty cells are missing.
///
/// If the schema names no id column, a `row_id` column is used when present
/// and otherwise ids are the 0-based row positions.
pub fn load_dataset(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(file, schema)
}

pub(crate) fn read_dataset<R: std::io::Read>(reader: R, schema: &FeatureSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let id_name = schema.id_column.clone().unwrap_or_else(|| "row_id".into());
    let mut feature_pos = vec![None; schema.len()];
    let mut label_pos = None;
    let mut id_pos = None;
    for (pos, name) in header.iter().enumerate() {
        if name == schema.label {
            label_pos = Some(pos);
        } else if name == id_name {
            id_pos = Some(pos);
        } else if let Some(j) = schema.index_of(name) {
            feature_pos[j] = Some(pos);
        } else {
            return Err(Error::UnknownColumn(name.to_string()));
        }
    }
    let label_pos = label_pos.ok_or_else(|| Error::MissingColumn(schema.label.clone()))?;
    if schema.id_column.is_some() && id_pos.is_none() {
        return Err(Error::MissingColumn(id_name));
    }
    let feature_pos: Vec<usize> = feature_pos
        .into_iter()
        .enumerate()
        .map(|(j, p)| p.ok_or_else(|| Error::MissingColumn(schema.features[j].name.clone())))
        .collect::<Result<_>>()?;

    let lookups: Vec<Option<HashMap<&str, usize>>> = schema
        .features
        .iter()
        .map(|f| {
            f.categories()
                .map(|cats| cats.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect())
        })
        .collect();

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut row = Vec::with_capacity(schema.len());
        for (j, spec) in schema.features.iter().enumerate() {
            let raw = rec.get(feature_pos[j]).unwrap_or("").trim();
            let cell_err = |reason: &str| Error::Cell {
                row: r,
                column: spec.name.clone(),
                value: raw.to_string(),
                reason: reason.to_string(),
            };
            let cell = match &spec.kind {
                FeatureKind::Categorical { .. } => {
                    let lookup = lookups[j].as_ref().expect("categorical lookup");
                    let key = if raw.is_empty() { NAN_CATEGORY } else { raw };
                    let idx = lookup.get(key).ok_or_else(|| cell_err("undeclared category"))?;
                    Some(*idx as f64)
                }
                FeatureKind::Ordinal { values } => {
                    if raw.is_empty() {
                        None
                    } else {
                        let v: f64 = raw.parse().map_err(|_| cell_err("not a number"))?;
                        if !v.is_finite() {
                            return Err(cell_err("not finite"));
                        }
                        if let Some(allowed) = values {
                            if !allowed.contains(&v) {
                                return Err(cell_err("not an allowed value"));
                            }
                        }
                        Some(v)
                    }
                }
            };
            row.push(cell);
        }
        let raw_label = rec.get(label_pos).unwrap_or("").trim();
        let label = match raw_label {
            "0" => 0,
            "1" => 1,
            _ => {
                return Err(Error::Cell {
                    row: r,
                    column: schema.label.clone(),
                    value: raw_label.to_string(),
                    reason: "label must be 0 or 1".into(),
                })
            }
        };
        let id = match id_pos {
            Some(p) => rec.get(p).unwrap_or("").to_string(),
            None => r.to_string(),
        };
        rows.push(row);
        labels.push(label);
        ids.push(id);
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(Arc::new(schema.clone()), rows, labels, ids)
}
