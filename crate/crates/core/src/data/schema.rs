use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Category materialized for missing categorical cells.
pub const NAN_CATEGORY: &str = "nan";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FeatureKind {
    /// Numeric with an inherent order. `values`, when given, lists the
    /// admissible codes in strictly increasing order.
    Ordinal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<f64>>,
    },
    /// Unordered labels, one-hot expanded at the model boundary.
    Categorical { values: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
    #[serde(default)]
    pub monotone_eligible: bool,
}

impl FeatureSpec {
    pub fn ordinal(name: impl Into<String>, monotone_eligible: bool) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Ordinal { values: None },
            monotone_eligible,
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, values: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical {
                values: values.into_iter().map(Into::into).collect(),
            },
            monotone_eligible: false,
        }
    }

    pub fn is_ordinal(&self) -> bool {
        matches!(self.kind, FeatureKind::Ordinal { .. })
    }

    /// Categories of a categorical feature, including the `nan` sentinel.
    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { values } => Some(values),
            FeatureKind::Ordinal { .. } => None,
        }
    }
}

/// Ordered feature list plus the label and optional row-id column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    /// Validates the schema and appends the `nan` sentinel to every
    /// categorical feature that does not already declare it.
    pub fn new(label: impl Into<String>, id_column: Option<String>, features: Vec<FeatureSpec>) -> Result<Self> {
        let mut schema = FeatureSchema {
            label: label.into(),
            id_column,
            features,
        };
        schema.normalize()?;
        Ok(schema)
    }

    fn normalize(&mut self) -> Result<()> {
        let mut seen = HashSet::new();
        if self.features.is_empty() {
            return Err(Error::Schema("no features declared".into()));
        }
        for f in &mut self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.clone()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.name == self.label || Some(&f.name) == self.id_column.as_ref() {
                return Err(Error::Schema(format!(
                    "feature `{}` collides with the label or id column",
                    f.name
                )));
            }
            match &mut f.kind {
                FeatureKind::Ordinal { values: Some(vals) } => {
                    if vals.iter().any(|v| !v.is_finite()) {
                        return Err(Error::Schema(format!("`{}` has non-finite allowed values", f.name)));
                    }
                    if vals.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(Error::Schema(format!(
                            "allowed values of `{}` must be strictly increasing",
                            f.name
                        )));
                    }
                }
                FeatureKind::Ordinal { values: None } => {}
                FeatureKind::Categorical { values } => {
                    if f.monotone_eligible {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` cannot be monotone-eligible",
                            f.name
                        )));
                    }
                    let mut cats = HashSet::new();
                    for v in values.iter() {
                        if !cats.insert(v.clone()) {
                            return Err(Error::Schema(format!("duplicate category `{v}` in `{}`", f.name)));
                        }
                    }
                    if !cats.contains(NAN_CATEGORY) {
                        values.push(NAN_CATEGORY.to_string());
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut schema: FeatureSchema = serde_json::from_str(text)?;
        schema.normalize()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Short hex digest identifying feature names, kinds and value sets.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(&self.features).expect("schema serializes");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_category_is_materialized() {
        let s = FeatureSchema::new(
            "y",
            None,
            vec![FeatureSpec::categorical("race", ["a", "b"])],
        )
        .unwrap();
        assert_eq!(s.features[0].categories().unwrap(), ["a", "b", "nan"]);
    }

    #[test]
    fn rejects_duplicates_and_bad_orders() {
        let dup = FeatureSchema::new(
            "y",
            None,
            vec![FeatureSpec::ordinal("a", true), FeatureSpec::ordinal("a", false)],
        );
        assert!(dup.is_err());

        let bad = FeatureSchema::new(
            "y",
            None,
            vec![FeatureSpec {
                name: "stage".into(),
                kind: FeatureKind::Ordinal {
                    values: Some(vec![1.0, 3.0, 2.0]),
                },
                monotone_eligible: true,
            }],
        );
        assert!(bad.is_err());

        let mut cat = FeatureSpec::categorical("c", ["x"]);
        cat.monotone_eligible = true;
        assert!(FeatureSchema::new("y", None, vec![cat]).is_err());
    }

    #[test]
    fn json_sidecar_round_trip() {
        let text = r#"{
            "label": "alive",
            "features": [
                {"name": "gleason", "kind": "ordinal", "values": [1, 2, 3, 4, 5], "monotone_eligible": true},
                {"name": "race", "kind": "categorical", "values": ["white", "black"]}
            ]
        }"#;
        let s = FeatureSchema::from_json(text).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.features[0].monotone_eligible);
        let back = FeatureSchema::from_json(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }
}
