//! Drift estimation for discretely observed multidimensional diffusions.
//!
//! Given observations `(X_{t_i})` of an Ito diffusion
//! `dX = mu(X, theta) dt + nu(X) dW` on an equidistant grid over `[0, T]`,
//! this crate maximizes the Euler-discretized log-likelihood to estimate the
//! drift parameter vector, compares the subsample estimate against the
//! fine-grid reference through a mixed-normal test statistic, and runs the
//! Monte Carlo coverage experiments for the Heston system end to end.
//!
//! Module map:
//! - [`numerics`]: dense small-matrix kernels, Jacobi eigendecomposition,
//!   chi-square quantiles, reproducible Gaussian streams.
//! - [`model`]: the abstract diffusion model and regularity diagnostics.
//! - [`simulate`]: Euler scheme paths, subsampling, CSV persistence.
//! - [`likelihood`]: the approximate log-likelihood and its derivatives.
//! - [`estimator`]: closed-form and Newton maximizers.
//! - [`asymptotics`]: covariance discretization, whitened statistic,
//!   coverage and mixed-normal sampling.
//! - [`heston`], [`ou`]: registered models; Heston carries closed forms
//!   that double as oracles for the generic machinery.
//! - [`experiment`]: replicate orchestration and coverage tables.

pub mod asymptotics;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod heston;
pub mod likelihood;
pub mod model;
pub mod numerics;
pub mod ou;
pub mod simulate;

pub use error::{Error, Result};
