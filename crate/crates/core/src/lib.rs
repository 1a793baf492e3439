//! Monotone-constrained gradient-boosted trees with alignment auditing.
//!
//! The crate covers the full study pipeline:
//!
//! - [`data`]: typed tabular datasets, stratified splits, seeded subsamples and
//!   a synthetic generator with known monotone ground truth.
//! - [`gbt`]: second-order boosted trees with logistic loss, learned missing
//!   routing, per-feature monotone constraints and grid search by stratified
//!   k-fold CV.
//! - [`eval`]: AUC-ROC, average precision and across-seed curve aggregation.
//! - [`explain`]: path-dependent TreeSHAP and top-k bar-plot payloads.
//! - [`align`]: survey-to-constraint derivation, partial dependence and
//!   violation detection.
//! - [`distance`]: prediction, ranking and SHAP distances between two models.
//! - [`sweep`]: the train-size × seed study with resumable cells.
//! - [`experiment`]: the blinded pairwise preference experiment and its
//!   fixed-effects logistic regression.

pub mod align;
pub mod data;
pub mod distance;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod explain;
pub mod gbt;
pub mod seed;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
