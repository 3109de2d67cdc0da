//! Conditional density estimation with predictor-dependent Dirichlet-process
//! mixtures of Gaussian kernels.
//!
//! The model places a DP prior on joint atoms `(mu_x, mu_y)` and an
//! inverse-gamma prior on a common bandwidth `sigma`. Mixing weights are
//! reweighted by a Gaussian kernel in the covariate, so the conditional
//! density of a response given a predictor is an infinite (here truncated)
//! mixture whose weights move with `x`. Prior hyperparameters
//! `gamma = (beta, lambda, tau^2)` are selected from the data (empirical
//! Bayes) and clamped into a slowly growing box before being plugged into
//! the posterior.
//!
//! Crate layout:
//! - [`rng`], [`dist`]: seedable streams, scalar samplers, KS testing
//! - [`model`]: mixture state, stick-breaking, densities, prior sampling,
//!   the hyperparameter change-of-measure map
//! - [`eb`]: moment estimators for `gamma` and the clamping box
//! - [`inference`]: Metropolis-within-Gibbs posterior sampling and the
//!   posterior mean density
//! - [`metrics`]: q-integrated L1 / Hellinger / KL / V2 functionals
//! - [`simulate`]: synthetic truths, dataset generation, Hölder envelope
//!   checking
//! - [`study`]: fit pipeline, consistency-trend and dimension-reduction
//!   studies

pub mod config;
pub mod data;
pub mod dist;
pub mod eb;
pub mod error;
pub mod inference;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simulate;
pub mod study;
pub mod util;

pub use error::{Error, Result};
