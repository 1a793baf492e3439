//! Path-dependent TreeSHAP attributions and the top-k bar-plot payloads shown
//! to raters.
//!
//! Attributions are in margin (log-odds) space, one per model input column,
//! plus a baseline equal to the model's expected margin under the training
//! cover distribution. Per row they sum exactly to the predicted margin.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Encoding, FeatureMatrix};
use crate::gbt::{TreeEnsemble, TreeNode};
use crate::stats::logistic;
use crate::{seed, Error, Result};

/// Row-major `q × (m + 1)` attributions; the last column is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub columns: Vec<String>,
    pub row_ids: Vec<String>,
    pub values: Vec<f64>,
    pub model_fingerprint: String,
}

impl ShapMatrix {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    /// Number of attribution columns including the baseline.
    pub fn width(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn baseline(&self) -> f64 {
        self.values.get(self.columns.len()).copied().unwrap_or(0.0)
    }

    /// Per-row L1 distance to another matrix over all columns including the baseline.
    pub fn row_l1(&self, other: &ShapMatrix) -> Result<Vec<f64>> {
        if self.width() != other.width() || self.n_rows() != other.n_rows() {
            return Err(Error::LengthMismatch {
                left: self.values.len(),
                right: other.values.len(),
            });
        }
        Ok((0..self.n_rows())
            .map(|i| self.row(i).iter().zip(other.row(i)).map(|(a, b)| (a - b).abs()).sum())
            .collect())
    }

    /// CSV with `row_id`, one column per model input and `baseline`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        write!(out, "row_id").unwrap();
        for c in &self.columns {
            write!(out, ",{c}").unwrap();
        }
        writeln!(out, ",baseline").unwrap();
        for (i, id) in self.row_ids.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for v in self.row(i) {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    zero_fraction: f64,
    one_fraction: f64,
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: Option<usize>) {
    let l = path.len();
    path.push(PathElement {
        feature,
        zero_fraction: zero,
        one_fraction: one,
        pweight: if l == 0 { 1.0 } else { 0.0 },
    });
    for i in (0..l).rev() {
        path[i + 1].pweight += one * path[i].pweight * (i + 1) as f64 / (l + 1) as f64;
        path[i].pweight = zero * path[i].pweight * (l - i) as f64 / (l + 1) as f64;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, i: usize) {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut next_one = path[l].pweight;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = path[j].pweight;
            path[j].pweight = next_one * (l + 1) as f64 / ((j + 1) as f64 * one);
            next_one = tmp - path[j].pweight * zero * (l - j) as f64 / (l + 1) as f64;
        } else {
            path[j].pweight = path[j].pweight * (l + 1) as f64 / (zero * (l - j) as f64);
        }
    }
    for j in i..l {
        path[j].feature = path[j + 1].feature;
        path[j].zero_fraction = path[j + 1].zero_fraction;
        path[j].one_fraction = path[j + 1].one_fraction;
    }
    path.pop();
}

fn unwound_path_sum(path: &[PathElement], i: usize) -> f64 {
    let l = path.len() - 1;
    let one = path[i].one_fraction;
    let zero = path[i].zero_fraction;
    let mut next_one = path[l].pweight;
    let mut total = 0.0;
    for j in (0..l).rev() {
        if one != 0.0 {
            let tmp = next_one * (l + 1) as f64 / ((j + 1) as f64 * one);
            total += tmp;
            next_one = path[j].pweight - tmp * zero * (l - j) as f64 / (l + 1) as f64;
        } else if zero != 0.0 {
            total += path[j].pweight / zero / ((l - j) as f64 / (l + 1) as f64);
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    row: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero: f64,
    one: f64,
    feature: Option<usize>,
) {
    extend_path(&mut path, zero, one, feature);
    match node {
        TreeNode::Leaf { weight, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let e = path[i];
                phi[e.feature.expect("only the root element lacks a feature")] +=
                    w * (e.one_fraction - e.zero_fraction) * weight;
            }
        }
        TreeNode::Split {
            feature: f,
            threshold,
            default_left,
            cover,
            left,
            right,
        } => {
            let v = row[*f];
            let go_left = if v.is_nan() { *default_left } else { v < *threshold };
            let (hot, cold) = if go_left { (left, right) } else { (right, left) };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == Some(*f)) {
                iz = path[k].zero_fraction;
                io = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let frac = |child: &TreeNode| if *cover > 0.0 { child.cover() / cover } else { 0.0 };
            recurse(hot, row, phi, path.clone(), iz * frac(hot), io, Some(*f));
            recurse(cold, row, phi, path, iz * frac(cold), 0.0, Some(*f));
        }
    }
}

/// Attributions of one tree for one row, added into `phi` (length `m`).
pub fn tree_shap_row(tree: &TreeNode, row: &[f64], phi: &mut [f64]) {
    recurse(tree, row, phi, Vec::with_capacity(tree.depth() + 2), 1.0, 1.0, None);
}

/// Expected margin of the ensemble under its training cover distribution.
pub fn expected_margin(model: &TreeEnsemble) -> f64 {
    model.trees.iter().fold(model.base_score, |acc, t| acc + t.expected_value())
}

/// TreeSHAP of an already encoded matrix.
pub fn tree_shap_matrix(model: &TreeEnsemble, x: &FeatureMatrix, row_ids: &[String]) -> Result<ShapMatrix> {
    if x.n_cols != model.n_cols() {
        return Err(Error::LengthMismatch {
            left: x.n_cols,
            right: model.n_cols(),
        });
    }
    if row_ids.len() != x.n_rows {
        return Err(Error::LengthMismatch {
            left: row_ids.len(),
            right: x.n_rows,
        });
    }
    let m = x.n_cols;
    let baseline = expected_margin(model);
    let mut values = vec![0.0; x.n_rows * (m + 1)];
    values.par_chunks_mut(m + 1).enumerate().for_each(|(i, out)| {
        let row = x.row(i);
        for t in &model.trees {
            tree_shap_row(t, row, &mut out[..m]);
        }
        out[m] = baseline;
    });
    Ok(ShapMatrix {
        columns: model.columns.clone(),
        row_ids: row_ids.to_vec(),
        values,
        model_fingerprint: model.fingerprint()?,
    })
}

/// TreeSHAP attributions for every row of `rows`.
pub fn tree_shap(model: &TreeEnsemble, rows: &Dataset) -> Result<ShapMatrix> {
    let x = model.encode(rows)?;
    tree_shap_matrix(model, &x, rows.row_ids())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Effect {
    Increases,
    Decreases,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarEntry {
    pub feature: String,
    pub value: String,
    pub attribution: f64,
    pub effect: Effect,
}

/// One model's bars for one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBars {
    pub entries: Vec<BarEntry>,
    pub baseline: f64,
    pub probability: f64,
}

/// Side-by-side top-k bars of two models for one row. `first_on_left`
/// records whether the first model of the pair is shown on the left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPlotPayload {
    pub row_id: String,
    pub left: ModelBars,
    pub right: ModelBars,
    pub first_on_left: bool,
}

/// Display name and value of model column `c` for row `row` of `data`.
/// One-hot columns show the categorical feature name; the value is the
/// column's category when active and `not <category>` otherwise.
fn display(enc: &Encoding, data: &Dataset, row: usize, c: usize) -> (String, String) {
    let col = &enc.columns()[c];
    let spec = &data.schema().features[col.feature];
    match col.category {
        None => (spec.name.clone(), data.display_value(row, col.feature)),
        Some(k) => {
            let cat = &spec.categories().expect("one-hot column of a categorical feature")[k];
            let active = data.rows()[row][col.feature] == Some(k as f64);
            let value = if active { cat.clone() } else { format!("not {cat}") };
            (spec.name.clone(), value)
        }
    }
}

fn top_k(s: &ShapMatrix, i: usize, k: usize, enc: &Encoding, data: &Dataset, row: usize) -> ModelBars {
    let m = s.columns.len();
    let attrs = &s.row(i)[..m];
    let mut order: Vec<usize> = (0..m).collect();
    // Larger magnitude first; equal magnitudes (notably zeros) by column name.
    order.sort_by(|&a, &b| {
        attrs[b]
            .abs()
            .partial_cmp(&attrs[a].abs())
            .unwrap()
            .then_with(|| s.columns[a].cmp(&s.columns[b]))
    });
    let entries = order[..k]
        .iter()
        .map(|&c| {
            let (feature, value) = display(enc, data, row, c);
            let a = attrs[c];
            BarEntry {
                feature,
                value,
                attribution: a,
                effect: if a > 0.0 {
                    Effect::Increases
                } else if a < 0.0 {
                    Effect::Decreases
                } else {
                    Effect::None
                },
            }
        })
        .collect();
    let total: f64 = s.row(i).iter().sum();
    ModelBars {
        entries,
        baseline: s.baseline(),
        probability: logistic(total),
    }
}

/// Fair coin deciding whether the first model of a pair is shown on the left.
pub fn first_on_left(side_seed: u64) -> bool {
    seed::rng(side_seed).gen::<bool>()
}

/// Top-`k` bars of two models for row `row` of `data`, sides drawn from `side_seed`.
pub fn top_k_payload(
    first: &ShapMatrix,
    second: &ShapMatrix,
    data: &Dataset,
    row: usize,
    k: usize,
    side_seed: u64,
) -> Result<BarPlotPayload> {
    let m = first.columns.len();
    if first.columns != second.columns {
        return Err(Error::InvalidArgument("attribution matrices have different columns".into()));
    }
    if k > m {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds the {m} available features")));
    }
    if row >= data.len() || row >= first.n_rows() || row >= second.n_rows() {
        return Err(Error::InvalidArgument(format!("row {row} is out of range")));
    }
    let row_id = &data.row_ids()[row];
    if &first.row_ids[row] != row_id || &second.row_ids[row] != row_id {
        return Err(Error::InvalidArgument(format!("row {row} ids disagree across inputs")));
    }
    let enc = Encoding::new(data.schema());
    if enc.names() != first.columns {
        return Err(Error::SchemaMismatch {
            expected: enc.fingerprint().to_string(),
            found: "attribution columns".into(),
        });
    }
    let a = top_k(first, row, k, &enc, data, row);
    let b = top_k(second, row, k, &enc, data, row);
    let first_on_left = first_on_left(side_seed);
    let (left, right) = if first_on_left { (a, b) } else { (b, a) };
    Ok(BarPlotPayload {
        row_id: row_id.clone(),
        left,
        right,
        first_on_left,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(w: f64, c: f64) -> TreeNode {
        TreeNode::leaf(w, c)
    }

    fn split(f: usize, t: f64, c: f64, l: TreeNode, r: TreeNode) -> TreeNode {
        TreeNode::Split {
            feature: f,
            threshold: t,
            default_left: true,
            cover: c,
            left: Box::new(l),
            right: Box::new(r),
        }
    }

    fn ensemble(trees: Vec<TreeNode>, m: usize, base: f64) -> TreeEnsemble {
        TreeEnsemble {
            format_version: crate::gbt::MODEL_FORMAT_VERSION,
            schema_fingerprint: "fp".into(),
            columns: (0..m).map(|j| format!("x{j}")).collect(),
            base_score: base,
            learning_rate: 1.0,
            max_depth: 2,
            constraints: vec![crate::gbt::MonotoneDirection::Unconstrained; m],
            trees,
        }
    }

    /// Expected tree output when only features in `s` are known.
    fn cond_exp(node: &TreeNode, row: &[f64], s: u32) -> f64 {
        match node {
            TreeNode::Leaf { weight, .. } => *weight,
            TreeNode::Split {
                feature,
                threshold,
                default_left,
                cover,
                left,
                right,
            } => {
                if s & (1 << feature) != 0 {
                    let v = row[*feature];
                    let go_left = if v.is_nan() { *default_left } else { v < *threshold };
                    cond_exp(if go_left { left } else { right }, row, s)
                } else {
                    (left.cover() * cond_exp(left, row, s) + right.cover() * cond_exp(right, row, s)) / cover
                }
            }
        }
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    fn brute_shap(tree: &TreeNode, row: &[f64], m: usize) -> Vec<f64> {
        let mut phi = vec![0.0; m];
        for (i, p) in phi.iter_mut().enumerate() {
            for s in 0u32..(1 << m) {
                if s & (1 << i) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = factorial(size) * factorial(m - size - 1) / factorial(m);
                *p += w * (cond_exp(tree, row, s | (1 << i)) - cond_exp(tree, row, s));
            }
        }
        phi
    }

    #[test]
    fn empty_ensemble_has_only_the_baseline() {
        let model = ensemble(vec![], 3, -0.4);
        let x = FeatureMatrix {
            n_rows: 2,
            n_cols: 3,
            values: vec![1.0; 6],
        };
        let s = tree_shap_matrix(&model, &x, &["a".into(), "b".into()]).unwrap();
        assert_eq!(s.row(0), &[0.0, 0.0, 0.0, -0.4]);
        assert_eq!(s.row(1), &[0.0, 0.0, 0.0, -0.4]);
    }

    #[test]
    fn stump_attribution_by_hand() {
        // 30 rows left with weight 1, 10 right with weight -1: E = 0.5.
        let tree = split(1, 0.5, 40.0, leaf(1.0, 30.0), leaf(-1.0, 10.0));
        let model = ensemble(vec![tree], 3, 0.0);
        let x = FeatureMatrix {
            n_rows: 2,
            n_cols: 3,
            values: vec![9.0, 0.0, 9.0, 9.0, 1.0, 9.0],
        };
        let s = tree_shap_matrix(&model, &x, &["l".into(), "r".into()]).unwrap();
        assert_eq!(s.row(0), &[0.0, 0.5, 0.0, 0.5]);
        assert_eq!(s.row(1), &[0.0, -1.5, 0.0, 0.5]);
    }

    #[test]
    fn matches_coalition_oracle_with_repeated_features() {
        let tree = split(
            0,
            0.5,
            100.0,
            split(1, 0.5, 60.0, leaf(0.3, 25.0), leaf(-0.2, 35.0)),
            split(0, 1.5, 40.0, leaf(0.7, 10.0), leaf(-0.9, 30.0)),
        );
        let tree2 = split(2, 0.5, 100.0, split(3, 2.0, 45.0, leaf(1.0, 5.0), leaf(0.1, 40.0)), leaf(-0.5, 55.0));
        for row in [
            [0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 3.0],
            [2.0, 0.0, 0.0, 3.0],
            [f64::NAN, 1.0, 0.0, f64::NAN],
        ] {
            for t in [&tree, &tree2] {
                let mut phi = vec![0.0; 4];
                tree_shap_row(t, &row, &mut phi);
                let oracle = brute_shap(t, &row, 4);
                for (a, b) in phi.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-12, "{phi:?} vs {oracle:?}");
                }
                let total: f64 = phi.iter().sum::<f64>() + t.expected_value();
                assert!((total - t.predict(&row)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_features_share_credit() {
        // Output is 1 only when both features are high.
        let tree = split(
            0,
            0.5,
            4.0,
            split(1, 0.5, 2.0, leaf(0.0, 1.0), leaf(0.0, 1.0)),
            split(1, 0.5, 2.0, leaf(0.0, 1.0), leaf(1.0, 1.0)),
        );
        let mut phi = vec![0.0; 2];
        tree_shap_row(&tree, &[1.0, 1.0], &mut phi);
        assert!((phi[0] - phi[1]).abs() < 1e-15);
        assert!((phi[0] - 0.375).abs() < 1e-15);
    }
}
