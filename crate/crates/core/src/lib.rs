//! Feature ranking for trained feed-forward networks by learning one
//! dropout rate per input feature.
//!
//! The pipeline: train an [`nn::MlpModel`], fit per-feature keep
//! probabilities with [`concrete::fit_dropout_rates`], rank features with
//! [`concrete::rank_from_rates`], and compare against the baselines in
//! [`rankers`] using the measures in [`eval`].

pub mod concrete;
pub mod dataset;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod matrix;
pub mod nn;
pub mod ranking;
pub mod rankers;
pub mod seeds;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use matrix::Matrix;
