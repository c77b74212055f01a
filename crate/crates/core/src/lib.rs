//! Merge-decision saliency analysis.
//!
//! Trains an LSTM predictor on aligned on-ramp merge demonstrations, explains
//! every prediction along the decision process with exact Shapley values and
//! measures how the distribution of those attributions shifts between
//! adjacent moments using KL divergence and mutual information.

pub mod config;
pub mod error;
pub mod exec;
pub mod features;
pub mod geometry;
pub mod ingest;
pub mod lstm;
pub mod metrics;
pub mod pipeline;
pub mod rng;
pub mod shap;
pub mod synth;
pub mod uncertainty;

pub use error::{Error, Result};
pub use features::{Feature, FeatureVector};
