//! Step-size and batch-size calculus for constant-step mini-batch SGD on
//! interpolated problems.
//!
//! When a single parameter vector drives every per-sample loss to zero
//! (over-parametrized regression, kernel interpolation), constant-step SGD
//! converges exponentially and the whole trade-off between batch size,
//! step size and computation is explicit. This crate packages:
//!
//! - [`rates`]: the closed-form calculus — optimal and near-optimal step
//!   sizes, contraction factors, speedup curves, the critical batch size
//!   separating the linear-scaling and saturation regimes, and per-gradient
//!   efficiency.
//! - [`spectral`]: covariance construction, eigenstructure, range/null
//!   projections and subsample covariances.
//! - [`problems`]: instance builders — flat-spectrum designs, seeded random
//!   interpolated quadratics, kernel regression duals, a smooth non-quadratic
//!   family, and CSV ingestion.
//! - [`engine`]: a seeded, reproducible SGD simulator with loss and
//!   range/null error traces.
//! - [`oracle`]: independent ground truth — an exact second-moment
//!   recursion, exhaustive enumeration over batch index tuples, and
//!   Monte-Carlo estimators with error bars.
//! - [`verify`]: a named battery of checks pitting the calculus against the
//!   oracles.

pub mod engine;
pub mod error;
pub mod oracle;
pub mod problems;
pub mod rates;
pub mod rng;
pub mod spectral;
pub mod verify;

pub use error::{Error, Result};
