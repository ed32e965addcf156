//! Hypothesis tests, p-values and confidence intervals for a single fixed
//! effect (or a set of them) in high-dimensional linear mixed models.
//!
//! The nuisance coefficients and the feature regression of the tested column
//! are estimated by L1-minimal linear programs whose constraints are weighted
//! by a block-diagonal proxy precision matrix. The random-effect covariance is
//! never estimated; the proxy only needs the grouping structure.
//!
//! Module map:
//!
//! * [`model`]: grouped data, block-diagonal algebra, proxy and true precision
//!   matrices, structural diagnostics.
//! * [`lp`]: dense bounded dual simplex used by every estimator.
//! * [`estimate`]: scaled lasso initialiser, tuning recipes and the
//!   constrained-L1 estimators (linear and GLMM).
//! * [`inference`]: test statistic, p-values, confidence intervals, power,
//!   multiplier bootstrap, GLMM test, proxy refinement.
//! * [`sim`]: generative models, oracle values and the Monte Carlo harness.

pub mod error;
pub mod estimate;
pub mod inference;
pub mod lp;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
