//! Tabular data: schema, datasets, splitting and synthetic generation.

mod dataset;
mod encode;
mod schema;
mod split;
mod synth;

pub use dataset::{load_dataset, Dataset};
pub use encode::{Column, Encoding, FeatureMatrix};
pub use schema::{FeatureKind, FeatureSchema, FeatureSpec, NAN_CATEGORY};
pub use split::{stratified_split, subsample_train, SplitSpec, Subsample};
pub use synth::{generate_synthetic, MonotoneFeature, SyntheticSpec};
