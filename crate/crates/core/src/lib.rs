//! Recursive identification of linear stochastic systems observed through a
//! saturation map, using a two-step weighted least-absolute-deviation scheme.
//!
//! Modules:
//! - [`model`]: saturation map, noise laws, regressor processes, simulator.
//! - [`projection`]: weighted-norm projection onto the admissible set.
//! - [`estimator`]: the two-step recursion and its building blocks.
//! - [`baseline`]: a squared-loss comparison method on the same skeleton.
//! - [`diagnostics`]: excitation, rate, regret and accuracy metrics.
//! - [`experiment`]: configuration, presets, datasets and the Monte Carlo runner.

pub mod baseline;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod model;
pub mod projection;

pub use error::{Error, Result};
