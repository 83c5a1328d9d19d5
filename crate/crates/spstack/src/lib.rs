//! Exact-sampling Bayesian inference for spatially-temporally varying
//! coefficient generalized linear models, combined across a grid of
//! candidate models by predictive stacking.
//!
//! Conditional on a small set of weakly identified parameters (kernel
//! decays, the noise scale, and a boundary adjustment), the posterior of
//! the regression coefficients and latent processes is available in closed
//! form and can be sampled exactly: draw an auxiliary vector from
//! conjugate-family distributions, then project it through a structured
//! linear map. Candidate models fix those parameters on a grid; their
//! posteriors are combined with weights chosen to maximize the K-fold
//! cross-validated predictive density.
//!
//! See the `book/` guide for a narrative walk-through of each stage.

pub mod chol;
pub mod error;
pub mod expfam;
pub mod kernel;
pub mod model;
pub mod rng;

pub use error::{Error, Result};
