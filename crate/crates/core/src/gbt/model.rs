use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Encoding, FeatureMatrix};
use crate::stats::logistic;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum MonotoneDirection {
    /// Output non-increasing in the feature.
    Decreasing,
    #[default]
    Unconstrained,
    /// Output non-decreasing in the feature.
    Increasing,
}

impl MonotoneDirection {
    pub fn sign(self) -> i8 {
        match self {
            MonotoneDirection::Decreasing => -1,
            MonotoneDirection::Unconstrained => 0,
            MonotoneDirection::Increasing => 1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            MonotoneDirection::Decreasing => MonotoneDirection::Increasing,
            MonotoneDirection::Unconstrained => MonotoneDirection::Unconstrained,
            MonotoneDirection::Increasing => MonotoneDirection::Decreasing,
        }
    }

    pub fn is_constrained(self) -> bool {
        self != MonotoneDirection::Unconstrained
    }
}

impl From<MonotoneDirection> for i8 {
    fn from(d: MonotoneDirection) -> i8 {
        d.sign()
    }
}

impl TryFrom<i8> for MonotoneDirection {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            -1 => Ok(MonotoneDirection::Decreasing),
            0 => Ok(MonotoneDirection::Unconstrained),
            1 => Ok(MonotoneDirection::Increasing),
            other => Err(format!("monotone direction must be -1, 0 or 1, got {other}")),
        }
    }
}

/// A binary tree node. Rows with `value < threshold` go left; missing values
/// follow `default_left`. `cover` is the number of training rows that reached
/// the node. Leaf weights already include the learning-rate shrinkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeNode {
    Split {
        feature: usize,
        threshold: f64,
        default_left: bool,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        weight: f64,
        cover: f64,
    },
}

impl TreeNode {
    pub fn leaf(weight: f64, cover: f64) -> Self {
        TreeNode::Leaf { weight, cover }
    }

    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { weight, .. } => return *weight,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                    ..
                } => {
                    let v = row[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    node = if go_left { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Cover-weighted mean leaf weight.
    pub fn expected_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { weight, .. } => *weight,
            TreeNode::Split { cover, left, right, .. } => {
                (left.cover() * left.expected_value() + right.cover() * right.expected_value()) / cover
            }
        }
    }

    pub fn visit_splits(&self, f: &mut impl FnMut(usize, f64)) {
        if let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = self
        {
            f(*feature, *threshold);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub format_version: u32,
    pub schema_fingerprint: String,
    /// Model input column names (after one-hot expansion).
    pub columns: Vec<String>,
    /// Prior log-odds added to every prediction.
    pub base_score: f64,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Per-column monotone direction enforced at training time.
    pub constraints: Vec<MonotoneDirection>,
    pub trees: Vec<TreeNode>,
}

impl TreeEnsemble {
    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn predict_margin_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |acc, t| acc + t.predict(row))
    }

    pub fn predict_margin(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows).map(|i| self.predict_margin_row(x.row(i))).collect()
    }

    pub fn predict_proba_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows)
            .map(|i| logistic(self.predict_margin_row(x.row(i))))
            .collect()
    }

    /// Encodes `data` and checks it against the model's schema fingerprint.
    pub fn encode(&self, data: &Dataset) -> Result<FeatureMatrix> {
        let found = data.schema().fingerprint();
        if found != self.schema_fingerprint {
            return Err(Error::SchemaMismatch {
                expected: self.schema_fingerprint.clone(),
                found,
            });
        }
        let m = Encoding::new(data.schema()).encode(data)?;
        if m.n_cols != self.n_cols() {
            return Err(Error::LengthMismatch {
                left: m.n_cols,
                right: self.n_cols(),
            });
        }
        Ok(m)
    }

    pub fn predict_proba(&self, data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.predict_proba_matrix(&self.encode(data)?))
    }

    /// Margins of the models made of the first `r` trees, for each `r` in
    /// `prefixes` (ascending).
    pub fn predict_margin_prefixes(&self, x: &FeatureMatrix, prefixes: &[usize]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(x.n_rows); prefixes.len()];
        for i in 0..x.n_rows {
            let row = x.row(i);
            let mut acc = self.base_score;
            let mut t = 0;
            for (k, &r) in prefixes.iter().enumerate() {
                while t < r.min(self.trees.len()) {
                    acc += self.trees[t].predict(row);
                    t += 1;
                }
                out[k].push(acc);
            }
        }
        out
    }

    /// Short content hash of the serialized model.
    pub fn fingerprint(&self) -> Result<String> {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: TreeEnsemble = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported model format version {}",
                m.format_version
            )));
        }
        if m.constraints.len() != m.columns.len() {
            return Err(Error::LengthMismatch {
                left: m.constraints.len(),
                right: m.columns.len(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
