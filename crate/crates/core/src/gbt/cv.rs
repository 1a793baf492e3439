use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::boost::{fit, TrainParams};
use super::model::{MonotoneDirection, TreeEnsemble};
use crate::align::ConstraintVector;
use crate::data::{Dataset, Encoding, FeatureMatrix};
use crate::eval::auc_roc;
use crate::{seed, Error, Result};

/// Hyperparameter grid searched by stratified k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub learning_rates: Vec<f64>,
    pub num_rounds: Vec<usize>,
    pub max_depths: Vec<usize>,
    pub folds: usize,
}

impl HyperGrid {
    /// The full 48-cell grid.
    pub fn full() -> Self {
        Self {
            learning_rates: vec![0.01, 0.1, 0.3, 0.5],
            num_rounds: vec![100, 300, 500],
            max_depths: vec![2, 3, 5, 10],
            folds: 5,
        }
    }

    /// A reduced 8-cell grid cheap enough for large sweeps.
    pub fn desk() -> Self {
        Self {
            learning_rates: vec![0.1, 0.3],
            num_rounds: vec![50, 100],
            max_depths: vec![2, 3],
            folds: 5,
        }
    }

    pub fn single(learning_rate: f64, num_rounds: usize, max_depth: usize) -> Self {
        Self {
            learning_rates: vec![learning_rate],
            num_rounds: vec![num_rounds],
            max_depths: vec![max_depth],
            folds: 5,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.learning_rates.len() * self.num_rounds.len() * self.max_depths.len()
    }

    /// Sorted, deduplicated copy; errors on empty axes or invalid values.
    pub fn normalized(&self) -> Result<Self> {
        let mut g = self.clone();
        g.learning_rates.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        g.learning_rates.dedup();
        g.num_rounds.sort_unstable();
        g.num_rounds.dedup();
        g.max_depths.sort_unstable();
        g.max_depths.dedup();
        if g.learning_rates.is_empty() || g.num_rounds.is_empty() || g.max_depths.is_empty() {
            return Err(Error::InvalidGrid("every grid axis needs at least one value".into()));
        }
        if g.learning_rates.iter().any(|&lr| !(lr > 0.0 && lr.is_finite())) {
            return Err(Error::InvalidGrid("learning rates must be positive".into()));
        }
        if g.num_rounds[0] == 0 {
            return Err(Error::InvalidGrid("round counts must be positive".into()));
        }
        if g.folds < 2 && g.n_cells() > 1 {
            return Err(Error::InvalidGrid("cross-validation needs at least 2 folds".into()));
        }
        Ok(g)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvCell {
    pub learning_rate: f64,
    pub num_rounds: usize,
    pub max_depth: usize,
    pub fold_aucs: Vec<f64>,
    pub mean_auc: f64,
}

/// Out-of-fold scores of the selected cell for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPrediction {
    pub fold: usize,
    /// Row indices into the training set.
    pub rows: Vec<usize>,
    pub labels: Vec<u8>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: usize,
    pub seed: u64,
    pub cells: Vec<CvCell>,
    /// Index into `cells` of the selected configuration.
    pub best: usize,
    pub best_fold_predictions: Vec<FoldPrediction>,
}

impl CvReport {
    pub fn best_cell(&self) -> &CvCell {
        &self.cells[self.best]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub model: TreeEnsemble,
    pub params: TrainParams,
    /// `None` when the grid has a single cell.
    pub cv: Option<CvReport>,
}

/// Assigns each row a fold in `0..k` so that both classes are spread evenly.
///
/// Rows of each class are shuffled, then dealt round-robin, with the dealing
/// position carried over from one class to the next.
pub fn stratified_folds(labels: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let smallest = neg.len().min(pos.len());
    if k < 2 || smallest < k {
        return Err(Error::DegenerateFold {
            fold: 0,
            folds: k,
            negatives: neg.len(),
            positives: pos.len(),
            max_folds: smallest,
        });
    }
    let mut rng = seed::rng(seed);
    let mut fold = vec![0; labels.len()];
    let mut next = 0;
    for mut class in [neg, pos] {
        class.shuffle(&mut rng);
        for i in class {
            fold[i] = next % k;
            next += 1;
        }
    }
    Ok(fold)
}

/// Maps per-feature directions onto model input columns. One-hot columns are
/// always unconstrained.
pub fn column_constraints(data: &Dataset, constraints: &ConstraintVector) -> Result<Vec<MonotoneDirection>> {
    let schema = data.schema();
    constraints.validate(schema)?;
    let enc = Encoding::new(schema);
    Ok(enc
        .columns()
        .iter()
        .map(|c| {
            if c.category.is_none() {
                constraints.directions[c.feature]
            } else {
                MonotoneDirection::Unconstrained
            }
        })
        .collect())
}

/// Fits a single configuration on a whole dataset.
pub fn fit_dataset(data: &Dataset, constraints: &ConstraintVector, params: &TrainParams) -> Result<TreeEnsemble> {
    let cols = column_constraints(data, constraints)?;
    let enc = Encoding::new(data.schema());
    let x = enc.encode(data)?;
    fit(&x, data.labels(), &enc.names(), enc.fingerprint(), &cols, params)
}

fn select_rows(x: &FeatureMatrix, rows: &[usize]) -> FeatureMatrix {
    let mut values = Vec::with_capacity(rows.len() * x.n_cols);
    for &r in rows {
        values.extend_from_slice(x.row(r));
    }
    FeatureMatrix {
        n_rows: rows.len(),
        n_cols: x.n_cols,
        values,
    }
}

/// Selects hyperparameters by cross-validated AUC and refits on all of `data`.
///
/// For each learning rate and depth one model with the largest round count is
/// fit per fold; smaller round counts are scored from its tree prefixes.
/// Cells are ranked by mean held-out AUC. Ties keep the earliest cell in
/// (learning rate, rounds, depth) ascending order.
pub fn train(data: &Dataset, constraints: &ConstraintVector, grid: &HyperGrid, seed: u64) -> Result<TrainOutcome> {
    let grid = grid.normalized()?;
    let cols = column_constraints(data, constraints)?;
    let enc = Encoding::new(data.schema());
    let names = enc.names();
    let x = enc.encode(data)?;
    let labels = data.labels();

    if grid.n_cells() == 1 {
        let params = TrainParams::new(grid.learning_rates[0], grid.num_rounds[0], grid.max_depths[0]);
        let model = fit(&x, labels, &names, enc.fingerprint(), &cols, &params)?;
        return Ok(TrainOutcome { model, params, cv: None });
    }

    let k = grid.folds;
    let fold_of = stratified_folds(labels, k, seed)?;
    let max_rounds = *grid.num_rounds.last().unwrap();
    let n_r = grid.num_rounds.len();
    let n_d = grid.max_depths.len();
    let cell_index = |a: usize, b: usize, c: usize| (a * n_r + b) * n_d + c;
    let mut fold_aucs = vec![vec![0.0; k]; grid.n_cells()];
    // Held-out scores per cell and fold, kept so the best cell's can be reported.
    let mut held_out: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); k]; grid.n_cells()];
    let mut fold_rows = Vec::with_capacity(k);

    for f in 0..k {
        let train_rows: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] != f).collect();
        let val_rows: Vec<usize> = (0..labels.len()).filter(|&i| fold_of[i] == f).collect();
        let xt = select_rows(&x, &train_rows);
        let yt: Vec<u8> = train_rows.iter().map(|&i| labels[i]).collect();
        let xv = select_rows(&x, &val_rows);
        let yv: Vec<u8> = val_rows.iter().map(|&i| labels[i]).collect();
        for (a, &lr) in grid.learning_rates.iter().enumerate() {
            for (c, &depth) in grid.max_depths.iter().enumerate() {
                let params = TrainParams::new(lr, max_rounds, depth);
                let model = fit(&xt, &yt, &names, enc.fingerprint(), &cols, &params)?;
                let prefixes = model.predict_margin_prefixes(&xv, &grid.num_rounds);
                for (b, margins) in prefixes.into_iter().enumerate() {
                    let idx = cell_index(a, b, c);
                    fold_aucs[idx][f] = auc_roc(&margins, &yv)?;
                    held_out[idx][f] = margins.into_iter().map(crate::stats::logistic).collect();
                }
            }
        }
        fold_rows.push((val_rows, yv));
    }

    let mut cells = Vec::with_capacity(grid.n_cells());
    let mut best = 0;
    for (a, &lr) in grid.learning_rates.iter().enumerate() {
        for (b, &rounds) in grid.num_rounds.iter().enumerate() {
            for (c, &depth) in grid.max_depths.iter().enumerate() {
                let aucs = fold_aucs[cell_index(a, b, c)].clone();
                let mean_auc = aucs.iter().sum::<f64>() / k as f64;
                if !cells.is_empty() {
                    let current: &CvCell = &cells[best];
                    if mean_auc > current.mean_auc {
                        best = cells.len();
                    }
                }
                cells.push(CvCell {
                    learning_rate: lr,
                    num_rounds: rounds,
                    max_depth: depth,
                    fold_aucs: aucs,
                    mean_auc,
                });
            }
        }
    }
    let best_scores = std::mem::take(&mut held_out[best]);
    let best_fold_predictions = fold_rows
        .into_iter()
        .zip(best_scores)
        .enumerate()
        .map(|(fold, ((rows, labels), scores))| FoldPrediction {
            fold,
            rows,
            labels,
            scores,
        })
        .collect();
    let chosen = &cells[best];
    let params = TrainParams::new(chosen.learning_rate, chosen.num_rounds, chosen.max_depth);
    let model = fit(&x, labels, &names, enc.fingerprint(), &cols, &params)?;
    Ok(TrainOutcome {
        model,
        params,
        cv: Some(CvReport {
            folds: k,
            seed,
            cells,
            best,
            best_fold_predictions,
        }),
    })
}
