//! Origin-destination migration flow models.
//!
//! Fits classical gravity and radiation models by pooled OLS and four
//! hierarchical Bayesian variants (varying intercept, varying coefficients,
//! for each family) with a built-in No-U-Turn sampler. Evaluation uses
//! MAE, R², CPC, and distance-binned CPC over sampled flow paths, and the
//! per-pair posterior parameter vectors feed an agglomerative clustering
//! analysis with χ² homogeneity tests on pair covariates.

pub mod analysis;
pub mod bayes;
pub mod classical;
pub mod data;
pub mod error;
pub mod features;
pub mod metrics;
pub mod sampler;

pub use error::{Error, Result};
