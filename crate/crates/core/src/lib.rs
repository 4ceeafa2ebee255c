//! Transfer-informed hierarchical Bayesian churn modeling for networks of
//! small businesses.
//!
//! The pipeline has three layers:
//!
//! 1. [`gbdt`] pre-trains a boosted tree ensemble on a large public corpus
//!    and [`shap_prior`] turns its Shapley attributions into a Gaussian
//!    prior over logistic-regression coefficients.
//! 2. [`hier`] defines a three-level hierarchical logistic regression whose
//!    posterior is sampled by the No-U-Turn sampler in [`nuts`].
//! 3. [`conformal`] calibrates set-valued predictions with a finite-sample
//!    coverage guarantee.
//!
//! [`eval`] holds the baselines, metrics, and the cross-validation protocol
//! used to compare the three approaches.

pub mod conformal;
pub mod data;
pub mod error;
pub mod eval;
pub mod gbdt;
pub mod hier;
mod json_float;
pub mod math;
pub mod nuts;
pub mod rng;
pub mod shap_prior;
pub mod trace;

pub use error::{Error, Result};
