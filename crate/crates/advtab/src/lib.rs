//! Black-box adversarial examples for imbalanced tabular classifiers.
//!
//! The crate trains a gradient-boosted decision-tree fraud model with a tuned
//! decision threshold, then attacks its true positives with three
//! threshold-aware black-box algorithms (ZOO, Boundary, HopSkipJump) under
//! realistic-value projection, editability constraints, and a weighted
//! imperceptibility norm. A harness sweeps the five toggle configurations and
//! reports success rate, unrealistic-value rate, and perturbed checked /
//! non-editable field counts per attack.
//!
//! Modules map onto the pipeline stages:
//!
//! - [`schema`]: feature types, one-hot groups, editability/checked flags
//! - [`ingest`]: CSV parsing, one-hot encoding, stratified splits
//! - [`model`]: native GBDT, F-beta threshold tuning, feature importance
//! - [`constraints`]: realistic projection and editability enforcement
//! - [`norms`]: L2 / L∞ / weighted custom norm
//! - [`attacks`]: the three attacks behind a common config/result contract
//! - [`harness`]: experiment sweep, metrics, and report files
//! - [`datagen`]: deterministic credit-application dataset generator

pub mod attacks;
pub mod constraints;
pub mod datagen;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod norms;
pub mod schema;

pub use ingest::{DatasetSplit, EncodedVector, RawRecord, SplitRatios};
pub use model::{GbdtModel, ThresholdedClassifier, TrainParams};
pub use schema::{FeatureSpec, FeatureType, Schema};
