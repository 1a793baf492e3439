//! Gradient-boosted decision trees for binary classification.
//!
//! Trees are grown greedily with second-order (gradient and hessian)
//! statistics of the logistic loss and L2 leaf regularization. Split candidates
//! are midpoints between consecutive distinct values. Missing values are routed
//! to whichever side yields the larger loss reduction.
//!
//! Monotone constraints use bounded leaf weights. Every node carries an
//! interval `[lower, upper]` for the weights below it. A split on a feature
//! constrained `+1` is rejected unless its (clipped) left weight is at most
//! its right weight; the children then inherit the interval cut at the
//! midpoint of the two weights. Any two rows that differ only in a
//! constrained feature part ways at a split on that feature, after which the
//! lower one can only reach leaves at or below the midpoint and the higher
//! one leaves at or above it. This holds in every tree, so the summed margin
//! is monotone too.

mod boost;
mod cv;
mod grow;
mod model;

pub use boost::{fit, fit_boosting_round, BoostState, TrainParams};
pub use cv::{column_constraints, fit_dataset, stratified_folds, train, CvCell, CvReport, FoldPrediction, HyperGrid, TrainOutcome};
pub use model::{MonotoneDirection, TreeEnsemble, TreeNode, MODEL_FORMAT_VERSION};
