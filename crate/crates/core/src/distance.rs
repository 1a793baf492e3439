//! Behavioral distances between two models on a shared test set.

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::explain::{tree_shap_matrix, ShapMatrix};
use crate::gbt::TreeEnsemble;
use crate::stats::logistic;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub d_pred: f64,
    pub d_rank: f64,
    pub d_shap: f64,
    pub q: usize,
    pub row_ids: Vec<String>,
    /// Per-row `|pA − pB|`.
    pub abs_prob_diff: Vec<f64>,
    /// Per-row L1 distance between attribution rows, baseline included.
    pub shap_l1: Vec<f64>,
}

impl DistanceReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn check_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch { left: a, right: b });
    }
    if a == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(())
}

/// Mean absolute difference of two probability vectors.
pub fn prediction_distance(pa: &[f64], pb: &[f64]) -> Result<f64> {
    check_len(pa.len(), pb.len())?;
    Ok(pa.iter().zip(pb).map(|(a, b)| (a - b).abs()).sum::<f64>() / pa.len() as f64)
}

struct Fenwick(Vec<i64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, i: usize, v: i64) {
        let mut i = i + 1;
        while i < self.0.len() {
            self.0[i] += v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over indices `< i`.
    fn prefix(&self, i: usize) -> i64 {
        let mut i = i;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

fn dense_ranks(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0; v.len()];
    let mut r = 0;
    for k in 0..idx.len() {
        if k > 0 && v[idx[k]] != v[idx[k - 1]] {
            r += 1;
        }
        ranks[idx[k]] = r;
    }
    ranks
}

/// Disagreement rate between two rankings over positive/negative pairs.
///
/// With `a` and `b` the signs of the score difference of a mixed pair under
/// each model, a pair contributes `|a − b| / 2`: 1 for opposite orderings,
/// 1/2 when exactly one model ties it. Summed over `P` pairs this equals
/// `(P − T − Σab) / 2`, where `T` counts pairs tied under both models, so only
/// `Σab` needs a pairwise sweep, done here with a Fenwick tree in `O(n log n)`.
pub fn ranking_distance(pa: &[f64], pb: &[f64], labels: &[u8]) -> Result<f64> {
    check_len(pa.len(), pb.len())?;
    check_len(pa.len(), labels.len())?;
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as i64;
    let n_neg = labels.len() as i64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass {
            positives: n_pos as usize,
            negatives: n_neg as usize,
        });
    }
    let pairs = n_pos * n_neg;
    let rb = dense_ranks(pb);
    let n_ranks = rb.iter().max().map_or(0, |m| m + 1);

    let mut order: Vec<usize> = (0..pa.len()).collect();
    order.sort_by(|&i, &j| {
        pa[i]
            .partial_cmp(&pa[j])
            .unwrap_or(Ordering::Equal)
            .then(rb[i].cmp(&rb[j]))
    });

    // Negatives already passed in `pa` order, and negatives in the current tie block.
    let mut below = Fenwick::new(n_ranks);
    let mut block = Fenwick::new(n_ranks);
    let mut neg_below = 0i64;
    // All negatives, for the "above" side.
    let mut all = Fenwick::new(n_ranks);
    for (i, &y) in labels.iter().enumerate() {
        if y == 0 {
            all.add(rb[i], 1);
        }
    }

    let mut sum_ab = 0i64;
    let mut tied_both = 0i64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pa[order[end]] == pa[order[start]] {
            end += 1;
        }
        let members = &order[start..end];
        for &i in members {
            if labels[i] == 0 {
                block.add(rb[i], 1);
            }
        }
        let neg_block: i64 = members.iter().filter(|&&i| labels[i] == 0).count() as i64;
        for &i in members.iter().filter(|&&i| labels[i] == 1) {
            let r = rb[i];
            let lt = |f: &Fenwick| f.prefix(r);
            let le = |f: &Fenwick| f.prefix(r + 1);
            // Negatives below in `pa`: a = +1, b = sign(B_i − B_j).
            let below_lt = lt(&below);
            let below_gt = neg_below - le(&below);
            // Negatives above in `pa`: a = −1.
            let above_lt = lt(&all) - below_lt - lt(&block);
            let above_gt = (n_neg - le(&all)) - below_gt - (neg_block - le(&block));
            sum_ab += (below_lt - below_gt) - (above_lt - above_gt);
            tied_both += le(&block) - lt(&block);
        }
        for &i in members {
            if labels[i] == 0 {
                block.add(rb[i], -1);
                below.add(rb[i], 1);
            }
        }
        neg_below += neg_block;
        start = end;
    }
    Ok((pairs - tied_both - sum_ab) as f64 / (2 * pairs) as f64)
}

/// Mean per-row L1 distance between attribution matrices, baseline included.
pub fn shap_distance(sa: &ShapMatrix, sb: &ShapMatrix) -> Result<f64> {
    if sa.columns != sb.columns {
        return Err(Error::InvalidArgument("attribution matrices have different columns".into()));
    }
    let l1 = sa.row_l1(sb)?;
    check_len(l1.len(), l1.len())?;
    Ok(l1.iter().sum::<f64>() / l1.len() as f64)
}

/// All three distances between `a` and `b` on `test`, with per-row vectors.
pub fn compare(a: &TreeEnsemble, b: &TreeEnsemble, test: &Dataset) -> Result<DistanceReport> {
    let xa = a.encode(test)?;
    let xb = b.encode(test)?;
    let ids = test.row_ids();
    let ma = a.predict_margin(&xa);
    let mb = b.predict_margin(&xb);
    let pa: Vec<f64> = ma.iter().map(|&m| logistic(m)).collect();
    let pb: Vec<f64> = mb.iter().map(|&m| logistic(m)).collect();
    let sa = tree_shap_matrix(a, &xa, ids)?;
    let sb = tree_shap_matrix(b, &xb, ids)?;
    let shap_l1 = sa.row_l1(&sb)?;
    let q = test.len();
    Ok(DistanceReport {
        d_pred: prediction_distance(&pa, &pb)?,
        d_rank: ranking_distance(&pa, &pb, test.labels())?,
        d_shap: shap_l1.iter().sum::<f64>() / q as f64,
        q,
        row_ids: ids.to_vec(),
        abs_prob_diff: pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).collect(),
        shap_l1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sign(x: f64) -> i32 {
        if x > 0.0 {
            1
        } else if x < 0.0 {
            -1
        } else {
            0
        }
    }

    fn brute_rank(pa: &[f64], pb: &[f64], y: &[u8]) -> f64 {
        let (mut total, mut n) = (0.0, 0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1 && y[j] == 0 {
                    n += 1;
                    let (a, b) = (sign(pa[i] - pa[j]), sign(pb[i] - pb[j]));
                    total += f64::from((a - b).abs()) / 2.0;
                }
            }
        }
        total / f64::from(n)
    }

    #[test]
    fn prediction_distance_by_hand() {
        assert!((prediction_distance(&[0.2, 0.6], &[0.4, 0.5]).unwrap() - 0.15).abs() < 1e-15);
        assert_eq!(prediction_distance(&[0.3], &[0.3]).unwrap(), 0.0);
        assert!(prediction_distance(&[0.3], &[0.3, 0.1]).is_err());
    }

    #[test]
    fn ranking_distance_extremes() {
        assert_eq!(ranking_distance(&[0.9, 0.1], &[0.1, 0.9], &[1, 0]).unwrap(), 1.0);
        assert_eq!(ranking_distance(&[0.9, 0.1], &[0.9, 0.1], &[1, 0]).unwrap(), 0.0);
        assert_eq!(ranking_distance(&[0.9, 0.1], &[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert!(ranking_distance(&[0.9, 0.1], &[0.5, 0.5], &[1, 1]).is_err());
    }

    #[test]
    fn ranking_distance_four_rows() {
        let pa = [0.9, 0.4, 0.4, 0.1];
        let pb = [0.2, 0.4, 0.3, 0.3];
        let y = [1, 0, 1, 0];
        let fast = ranking_distance(&pa, &pb, &y).unwrap();
        // Pairs (0,1): +,- → 1; (0,3): +,- → 1; (2,1): 0,- → 1/2; (2,3): +,0 → 1/2.
        assert_eq!(fast, 0.75);
        assert_eq!(fast, brute_rank(&pa, &pb, &y));
    }

    #[test]
    fn ranking_distance_matches_brute_force_with_heavy_ties() {
        let mut rng = crate::seed::rng(4);
        for _ in 0..300 {
            let n = rng.gen_range(2..40);
            let levels = rng.gen_range(1..6);
            let pa: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..levels)) / 10.0).collect();
            let pb: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..levels)) / 10.0).collect();
            let mut y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            y[0] = 0;
            y[1] = 1;
            let fast = ranking_distance(&pa, &pb, &y).unwrap();
            let slow = brute_rank(&pa, &pb, &y);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
            assert_eq!(fast, ranking_distance(&pb, &pa, &y).unwrap());
        }
    }

    fn shap(values: Vec<f64>, m: usize) -> ShapMatrix {
        let q = values.len() / (m + 1);
        ShapMatrix {
            columns: (0..m).map(|j| format!("x{j}")).collect(),
            row_ids: (0..q).map(|i| i.to_string()).collect(),
            values,
            model_fingerprint: String::new(),
        }
    }

    #[test]
    fn shap_distance_by_hand() {
        let a = shap(vec![0.1, -0.2, 0.5, 0.0, 0.3, 0.5, 1.0, 1.0, 0.5], 2);
        let b = shap(vec![0.2, -0.2, 0.4, 0.5, 0.3, 0.4, 0.0, 0.0, 0.4], 2);
        // Row sums: 0.1+0+0.1, 0.5+0+0.1, 1+1+0.1.
        let expected = (0.2 + 0.6 + 2.1) / 3.0;
        assert!((shap_distance(&a, &b).unwrap() - expected).abs() < 1e-12);
        let shifted = shap(a.values.iter().enumerate().map(|(k, v)| if k % 3 == 2 { v + 0.3 } else { *v }).collect(), 2);
        assert!((shap_distance(&a, &shifted).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(shap_distance(&a, &a).unwrap(), 0.0);
        assert!(shap_distance(&a, &shap(vec![0.0; 6], 2)).is_err());
    }

    #[test]
    fn triangle_inequality() {
        let mut rng = crate::seed::rng(8);
        for _ in 0..200 {
            let q = rng.gen_range(1..20);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| (0..q).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
            let (x, y, z) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let d = |u: &[f64], v: &[f64]| prediction_distance(u, v).unwrap();
            assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
            assert!(d(&x, &y) <= 1.0);
            let (sx, sy, sz) = (shap(x.clone(), 0), shap(y.clone(), 0), shap(z.clone(), 0));
            let s = |u: &ShapMatrix, v: &ShapMatrix| shap_distance(u, v).unwrap();
            assert!(s(&sx, &sz) <= s(&sx, &sy) + s(&sy, &sz) + 1e-12);
        }
    }
}
