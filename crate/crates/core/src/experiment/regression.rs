use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::store::ChoiceRecord;
use crate::{Error, Result};

const TOLERANCE: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;
/// A coefficient this large at a convergence failure indicates separation.
const DIVERGENCE: f64 = 15.0;
/// Linear predictors beyond this saturate the fitted probabilities. Separated
/// data still meet the likelihood tolerance, with such predictors.
const SATURATION: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub n: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl RegressionResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Plain-text coefficient table.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<28} {:>12} {:>10} {:>8} {:>8}\n", "", "coef", "std err", "z", "P>|z|");
        for i in 0..self.names.len() {
            s.push_str(&format!(
                "{:<28} {:>12.4} {:>10.3} {:>8.3} {:>8.3}\n",
                self.names[i], self.coefficients[i], self.std_errors[i], self.z_values[i], self.p_values[i]
            ));
        }
        s.push_str(&format!(
            "n = {}, log-likelihood = {:.4}, iterations = {}\n",
            self.n, self.log_likelihood, self.iterations
        ));
        s
    }
}

fn log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + e^η) computed stably.
            let softplus = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - softplus
        })
        .sum()
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let p: DVector<f64> = (x * beta).map(crate::stats::logistic);
    let w = p.map(|pi| pi * (1.0 - pi));
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    (x.transpose() * xw, p)
}

/// Maximum-likelihood logistic regression by Newton's method (IRLS).
///
/// Standard errors come from the inverse observed information at the
/// optimum; p-values are two-sided Wald tests.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[f64], names: Vec<String>) -> Result<RegressionResult> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: y.len(), right: n });
    }
    if names.len() != k {
        return Err(Error::LengthMismatch {
            left: names.len(),
            right: k,
        });
    }
    if n <= k {
        return Err(Error::InvalidArgument(format!("{n} observations for {k} coefficients")));
    }
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut last_change = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (info, p) = information(x, &beta);
        let grad = x.transpose() * (&yv - p);
        let Some(chol) = info.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&grad);
        // Newton steps can overshoot far from the optimum; halve until the likelihood improves.
        let mut t = 1.0;
        let mut next = &beta + &step * t;
        let mut next_ll = log_likelihood(x, y, &next);
        while next_ll < ll - 1e-12 && t > 1e-10 {
            t *= 0.5;
            next = &beta + &step * t;
            next_ll = log_likelihood(x, y, &next);
        }
        last_change = (next_ll - ll).abs();
        beta = next;
        ll = next_ll;
        if last_change < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        if beta.iter().any(|b| b.abs() > DIVERGENCE) {
            return Err(Error::Separation(format!(
                "coefficients diverged (max |coef| = {:.1}) after {iterations} iterations",
                beta.amax()
            )));
        }
        return Err(Error::NonConvergence {
            iterations,
            last_change,
        });
    }
    if (x * &beta).iter().any(|e| e.abs() > SATURATION) {
        return Err(Error::Separation(format!(
            "fitted probabilities reach 0 or 1 (max |coef| = {:.1})",
            beta.amax()
        )));
    }
    let (info, _) = information(x, &beta);
    let cov = info
        .try_inverse()
        .ok_or_else(|| Error::Separation("information matrix is singular".into()))?;
    let std_errors: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    let z_values: Vec<f64> = beta.iter().zip(&std_errors).map(|(b, s)| b / s).collect();
    let p_values = z_values
        .iter()
        .map(|z| erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
        .collect();
    Ok(RegressionResult {
        names,
        coefficients: beta.iter().copied().collect(),
        std_errors,
        z_values,
        p_values,
        n,
        log_likelihood: ll,
        iterations,
        converged,
    })
}

/// Regresses "chose the constrained model" on the per-patient SHAP distance
/// with pair fixed effects.
///
/// Pairs are dummy coded against the first entry of `pair_order` (or, when
/// empty, the first pair seen in `records`).
pub fn fit_choice_model(records: &[ChoiceRecord], pair_order: &[String]) -> Result<RegressionResult> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pairs: Vec<String> = pair_order.to_vec();
    for r in records {
        if !pairs.contains(&r.pair_id) {
            if !pair_order.is_empty() {
                return Err(Error::InvalidArgument(format!("response for unknown pair {}", r.pair_id)));
            }
            pairs.push(r.pair_id.clone());
        }
    }
    pairs.retain(|p| records.iter().any(|r| &r.pair_id == p));
    for p in &pairs {
        let ys: Vec<bool> = records
            .iter()
            .filter(|r| &r.pair_id == p)
            .map(|r| r.chose_constrained)
            .collect();
        if ys.iter().all(|&y| y == ys[0]) {
            return Err(Error::Separation(format!(
                "every response for pair {p} chose the {} model",
                if ys[0] { "constrained" } else { "unconstrained" }
            )));
        }
    }
    let k = 2 + pairs.len() - 1;
    let mut x = DMatrix::zeros(records.len(), k);
    let mut y = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        x[(i, 0)] = 1.0;
        x[(i, 1)] = r.shap_l1;
        let level = pairs.iter().position(|p| p == &r.pair_id).expect("pair listed");
        if level > 0 {
            x[(i, 1 + level)] = 1.0;
        }
        y.push(f64::from(u8::from(r.chose_constrained)));
    }
    let mut names = vec!["intercept".to_string(), "shap_distance".to_string()];
    names.extend(pairs[1..].iter().map(|p| format!("pair[{p}]")));
    fit_logistic(&x, &y, names)
}
