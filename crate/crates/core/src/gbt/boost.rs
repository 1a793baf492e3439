use serde::{Deserialize, Serialize};

use super::grow::{GrowParams, Grower};
use super::model::{MonotoneDirection, TreeEnsemble, TreeNode, MODEL_FORMAT_VERSION};
use crate::data::FeatureMatrix;
use crate::stats::logistic;
use crate::{Error, Result};

/// Per-fit hyperparameters. Only the first three are tuned by grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub learning_rate: f64,
    pub num_rounds: usize,
    pub max_depth: usize,
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum loss reduction required to split.
    pub gamma: f64,
    /// Minimum hessian sum in each child.
    pub min_child_weight: f64,
}

impl TrainParams {
    pub fn new(learning_rate: f64, num_rounds: usize, max_depth: usize) -> Self {
        Self {
            learning_rate,
            num_rounds,
            max_depth,
            lambda: 1.0,
            gamma: 0.0,
            min_child_weight: 1.0,
        }
    }

    fn grow_params(&self) -> GrowParams {
        GrowParams {
            max_depth: self.max_depth,
            lambda: self.lambda,
            gamma: self.gamma,
            min_child_weight: self.min_child_weight,
            learning_rate: self.learning_rate,
        }
    }
}

/// Mutable boosting state: current training margins and the presorted
/// column orders reused by every round.
pub struct BoostState<'a> {
    x: &'a FeatureMatrix,
    labels: &'a [u8],
    constraints: &'a [MonotoneDirection],
    margins: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
    sorted: Vec<Vec<u32>>,
}

impl<'a> BoostState<'a> {
    pub fn new(
        x: &'a FeatureMatrix,
        labels: &'a [u8],
        constraints: &'a [MonotoneDirection],
        base_score: f64,
    ) -> Result<Self> {
        if labels.len() != x.n_rows {
            return Err(Error::LengthMismatch {
                left: labels.len(),
                right: x.n_rows,
            });
        }
        if constraints.len() != x.n_cols {
            return Err(Error::LengthMismatch {
                left: constraints.len(),
                right: x.n_cols,
            });
        }
        let sorted = (0..x.n_cols)
            .map(|c| {
                let mut idx: Vec<u32> = (0..x.n_rows as u32)
                    .filter(|&r| !x.get(r as usize, c).is_nan())
                    .collect();
                idx.sort_by(|&a, &b| {
                    x.get(a as usize, c)
                        .partial_cmp(&x.get(b as usize, c))
                        .unwrap()
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Ok(Self {
            x,
            labels,
            constraints,
            margins: vec![base_score; x.n_rows],
            grad: vec![0.0; x.n_rows],
            hess: vec![0.0; x.n_rows],
            sorted,
        })
    }

    pub fn margins(&self) -> &[f64] {
        &self.margins
    }

    /// Logistic-loss gradients `p − y` and hessians `p(1 − p)` at the current margins.
    pub fn gradients(&mut self) -> (&[f64], &[f64]) {
        for i in 0..self.x.n_rows {
            let p = logistic(self.margins[i]);
            self.grad[i] = p - f64::from(self.labels[i]);
            self.hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        (&self.grad, &self.hess)
    }
}

/// Grows one tree on the current gradients and advances the margins.
pub fn fit_boosting_round(state: &mut BoostState<'_>, params: &TrainParams) -> TreeNode {
    state.gradients();
    let mut delta = vec![0.0; state.x.n_rows];
    let mut grower = Grower::new(
        state.x,
        &state.grad,
        &state.hess,
        state.constraints,
        params.grow_params(),
    );
    let rows: Vec<u32> = (0..state.x.n_rows as u32).collect();
    let tree = grower.grow(rows, state.sorted.clone(), &mut delta);
    for (m, d) in state.margins.iter_mut().zip(&delta) {
        *m += d;
    }
    tree
}

/// Prior log-odds of the positive class.
pub(crate) fn prior_log_odds(labels: &[u8]) -> Result<f64> {
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClass {
            positives: pos,
            negatives: labels.len() - pos,
        });
    }
    let p = pos as f64 / labels.len() as f64;
    Ok((p / (1.0 - p)).ln())
}

/// Fits `params.num_rounds` trees on an encoded matrix.
pub fn fit(
    x: &FeatureMatrix,
    labels: &[u8],
    column_names: &[String],
    schema_fingerprint: &str,
    constraints: &[MonotoneDirection],
    params: &TrainParams,
) -> Result<TreeEnsemble> {
    if params.learning_rate <= 0.0 || !params.learning_rate.is_finite() {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if column_names.len() != x.n_cols {
        return Err(Error::LengthMismatch {
            left: column_names.len(),
            right: x.n_cols,
        });
    }
    let base_score = prior_log_odds(labels)?;
    let mut state = BoostState::new(x, labels, constraints, base_score)?;
    let trees = (0..params.num_rounds)
        .map(|_| fit_boosting_round(&mut state, params))
        .collect();
    Ok(TreeEnsemble {
        format_version: MODEL_FORMAT_VERSION,
        schema_fingerprint: schema_fingerprint.to_string(),
        columns: column_names.to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        max_depth: params.max_depth,
        constraints: constraints.to_vec(),
        trees,
    })
}
