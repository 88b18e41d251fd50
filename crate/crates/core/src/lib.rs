//! Simulated maximum likelihood estimation for stochastic differential
//! equations observed at discrete times.
//!
//! The likelihood of a discretely observed diffusion factors into transition
//! densities that rarely have closed forms. This crate estimates each
//! transition density by sequential Monte Carlo importance sampling over
//! imputed subinterval points (Pedersen and Brownian-bridge samplers), models
//! the resulting noisy log-likelihood surface with a Gaussian process, and
//! locates the maximum likelihood estimate by sequentially adding parameter
//! values that maximize the expected improvement of the kriging mean (SKBO).
//!
//! Modules:
//! - [`models`]: SDE model abstraction, the built-in model zoo
//!   (Ornstein-Uhlenbeck, generalized CIR, GBM, generalized GBM),
//!   Euler-Maruyama simulation, and exact formulas where available.
//! - [`smc`]: importance-sampling estimators of transition densities and the
//!   log-likelihood at a fixed parameter value.
//! - [`gp`]: Gaussian-process surrogate with posterior-mode hyperparameter
//!   fitting, kriging mean/variance and their gradients.
//! - [`skbo`]: the sequential optimization loop, expected improvement,
//!   stopping rules, and confidence regions.
//! - [`harness`]: benchmark experiments, stock-price application, and
//!   plot-data emission backing the CLI.

pub mod gp;
pub mod harness;
pub mod models;
pub mod optim;
pub mod rng;
pub mod skbo;
pub mod smc;
pub mod util;

pub use models::{ObservedSeries, SdeModel, ThetaBox, ThetaPoint};
pub use smc::{LoglikEstimate, Sampler, SmcConfig};
