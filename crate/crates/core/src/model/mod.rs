//! Saturated observation model: thresholds, noise laws, regressor processes
//! and the trajectory simulator.

mod noise;
mod saturation;
mod simulate;

pub use noise::{
    noise_eval, noise_quantile, std_normal_cdf, std_normal_pdf, NoiseDistribution, NoiseModel,
};
pub use saturation::{classify_regime, saturate, Regime, SaturationSpec};
pub use simulate::{
    simulate_trajectory, Datum, RegressorProcess, SaturationSchedule, Simulator, SystemSpec,
    WeightPolicy, DEFAULT_WEIGHT_FLOOR,
};

use nalgebra::DVector;

use crate::error::Result;
use crate::projection::AdmissibleSet;

/// `sup_{x in D} |phi^T x|`, exact for boxes and balls.
pub fn regressor_bound(set: &AdmissibleSet, phi: &DVector<f64>) -> Result<f64> {
    set.support_abs(phi)
}
