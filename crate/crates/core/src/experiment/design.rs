use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of the blinded pairwise preference experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentDesign {
    /// Sweep replicates considered at `train_size`.
    pub n_runs: usize,
    /// Pairs whose `d_shap` lies at or above this quantile are eligible.
    pub pair_quantile: f64,
    pub n_pairs: usize,
    pub patients_per_pair: usize,
    /// Half of each pair's patients come from rows whose SHAP L1 lies at or
    /// above this quantile; the other half are uniform over the test set.
    pub patient_quantile: f64,
    pub raters: Vec<String>,
    pub patients_per_rater: usize,
    pub train_size: usize,
    /// Bars shown per model.
    pub top_k: usize,
    pub seed: u64,
}

impl Default for ExperimentDesign {
    fn default() -> Self {
        Self {
            n_runs: 150,
            pair_quantile: 0.75,
            n_pairs: 9,
            patients_per_pair: 24,
            patient_quantile: 0.75,
            raters: (1..=6).map(|i| format!("rater{i}")).collect(),
            patients_per_rater: 36,
            train_size: 400,
            top_k: 5,
            seed: 0,
        }
    }
}

impl ExperimentDesign {
    pub fn total_tasks(&self) -> usize {
        self.n_pairs * self.patients_per_pair
    }

    /// Patients each rater receives from each pair.
    pub fn per_rater_per_pair(&self) -> usize {
        self.patients_per_pair / self.raters.len().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.raters.len();
        if r == 0 || self.n_pairs == 0 || self.patients_per_pair == 0 {
            return Err(Error::InfeasibleDesign("raters, pairs and patients per pair must be positive".into()));
        }
        let mut sorted = self.raters.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != r {
            return Err(Error::InfeasibleDesign("rater names must be unique".into()));
        }
        for q in [self.pair_quantile, self.patient_quantile] {
            if !(0.0..1.0).contains(&q) {
                return Err(Error::InfeasibleDesign(format!("quantile {q} must lie in [0, 1)")));
            }
        }
        if self.patients_per_pair % 2 != 0 {
            return Err(Error::InfeasibleDesign(format!(
                "patients per pair ({}) must be even to split into a random and a top-quantile half",
                self.patients_per_pair
            )));
        }
        if self.n_pairs > self.n_runs {
            return Err(Error::InfeasibleDesign(format!(
                "cannot select {} pairs from {} runs",
                self.n_pairs, self.n_runs
            )));
        }
        let total = self.total_tasks();
        if self.patients_per_pair % r != 0 || total != r * self.patients_per_rater {
            let feasible: Vec<String> = (1..=self.patients_per_pair)
                .filter(|k| self.patients_per_pair % k == 0)
                .map(|k| format!("{k} raters × {} tasks", total / k))
                .collect();
            return Err(Error::InfeasibleDesign(format!(
                "{} pairs × {} patients cannot be split evenly into {r} raters × {} tasks with an equal share of \
                 every pair; feasible: {}",
                self.n_pairs,
                self.patients_per_pair,
                self.patients_per_rater,
                feasible.join(", ")
            )));
        }
        Ok(())
    }
}
