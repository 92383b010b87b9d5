use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::noise::NoiseModel;
use super::saturation::SaturationSpec;
use crate::error::{Error, Result};

/// One time step of data: regressor `phi_k`, observation `y_{k+1}`, the
/// saturation thresholds in force and an optional externally supplied weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Datum {
    pub regressor: DVector<f64>,
    pub observation: f64,
    pub spec: SaturationSpec,
    pub weight: Option<f64>,
}

impl Datum {
    pub fn dim(&self) -> usize {
        self.regressor.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if !self.observation.is_finite() || !self.spec.contains(self.observation) {
            return Err(Error::data(format!(
                "observation {} outside [{}, {}]",
                self.observation, self.spec.lower_clip, self.spec.upper_clip
            )));
        }
        if self.regressor.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("regressor contains a non-finite value"));
        }
        if let Some(b) = self.weight {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::data(format!("weight {b} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// How regressors are generated.
#[derive(Debug, Clone)]
pub enum RegressorProcess {
    /// `phi_{k+1} = A phi_k + v_{k+1}`, `phi_0 = 0`, with independent components
    /// `v_{k+1}^{(j)} = scale_j / (k+1)^{decay_j} * N(0, 1)`.
    Ar1 {
        transition: DMatrix<f64>,
        noise_scale: DVector<f64>,
        noise_decay: DVector<f64>,
    },
    /// Regressors read from a dataset, used in order.
    FixedDesign(Vec<DVector<f64>>),
}

impl RegressorProcess {
    fn validate(&self, dim: usize, horizon: usize) -> Result<()> {
        match self {
            RegressorProcess::Ar1 {
                transition,
                noise_scale,
                noise_decay,
            } => {
                if transition.nrows() != dim || transition.ncols() != dim {
                    return Err(Error::config(format!(
                        "transition matrix is {}x{}, expected {dim}x{dim}",
                        transition.nrows(),
                        transition.ncols()
                    )));
                }
                if noise_scale.len() != dim || noise_decay.len() != dim {
                    return Err(Error::config(format!(
                        "state-noise description must have {dim} components"
                    )));
                }
                if noise_scale.iter().chain(noise_decay.iter()).any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::config("state-noise scales and decays must be finite and non-negative"));
                }
                if transition.iter().any(|v| !v.is_finite()) {
                    return Err(Error::config("transition matrix must be finite"));
                }
                Ok(())
            }
            RegressorProcess::FixedDesign(rows) => {
                if rows.len() < horizon {
                    return Err(Error::config(format!(
                        "fixed design has {} rows, horizon is {horizon}",
                        rows.len()
                    )));
                }
                if let Some(r) = rows.iter().find(|r| r.len() != dim) {
                    return Err(Error::config(format!(
                        "fixed-design row has dimension {}, expected {dim}",
                        r.len()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Saturation thresholds as a function of time.
#[derive(Debug, Clone)]
pub enum SaturationSchedule {
    Constant(SaturationSpec),
    PerStep(Vec<SaturationSpec>),
}

impl SaturationSchedule {
    pub fn at(&self, k: usize) -> Option<SaturationSpec> {
        match self {
            SaturationSchedule::Constant(s) => Some(*s),
            SaturationSchedule::PerStep(v) => v.get(k).copied(),
        }
    }

    fn validate(&self, horizon: usize) -> Result<()> {
        match self {
            SaturationSchedule::Constant(s) => s.validate(),
            SaturationSchedule::PerStep(v) => {
                if v.len() < horizon {
                    return Err(Error::config(format!(
                        "saturation schedule has {} entries, horizon is {horizon}",
                        v.len()
                    )));
                }
                v.iter().try_for_each(SaturationSpec::validate)
            }
        }
    }
}

/// The simulated system: true parameter, regressor process, true noise and saturation.
#[derive(Debug, Clone)]
pub struct SystemSpec {
    pub theta: DVector<f64>,
    pub regressors: RegressorProcess,
    pub true_noise: NoiseModel,
    pub saturation: SaturationSchedule,
}

impl SystemSpec {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.theta.is_empty() {
            return Err(Error::config("parameter dimension must be at least 1"));
        }
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("true parameter must be finite"));
        }
        self.regressors.validate(self.dim(), horizon)?;
        self.true_noise.validate()?;
        self.saturation.validate(horizon)
    }
}

/// Stateful trajectory generator. Regressor innovations and observation noise
/// come from two independent ChaCha streams derived from the seed, so the
/// regressor path does not depend on the noise law.
#[derive(Debug, Clone)]
pub struct Simulator {
    system: SystemSpec,
    state: DVector<f64>,
    k: usize,
    regressor_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl Simulator {
    pub fn new(system: SystemSpec, seed: u64) -> Self {
        let d = system.dim();
        let mut regressor_rng = ChaCha8Rng::seed_from_u64(seed);
        regressor_rng.set_stream(0);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);
        Self {
            system,
            state: DVector::zeros(d),
            k: 0,
            regressor_rng,
            noise_rng,
        }
    }

    pub fn system(&self) -> &SystemSpec {
        &self.system
    }

    /// Produces the datum for the current time and advances the state.
    pub fn step(&mut self) -> Result<Datum> {
        let k = self.k;
        let phi = match &self.system.regressors {
            RegressorProcess::Ar1 { .. } => self.state.clone(),
            RegressorProcess::FixedDesign(rows) => rows
                .get(k)
                .cloned()
                .ok_or_else(|| Error::config(format!("fixed design exhausted at step {k}")))?,
        };
        let spec = self
            .system
            .saturation
            .at(k)
            .ok_or_else(|| Error::config(format!("saturation schedule exhausted at step {k}")))?;
        let eps = self.system.true_noise.sample(&mut self.noise_rng);
        let y = spec.saturate(phi.dot(&self.system.theta) + eps);

        if let RegressorProcess::Ar1 {
            transition,
            noise_scale,
            noise_decay,
        } = &self.system.regressors
        {
            let t = (k + 1) as f64;
            let mut next = transition * &self.state;
            for j in 0..next.len() {
                let z: f64 = self.regressor_rng.sample(StandardNormal);
                next[j] += noise_scale[j] / t.powf(noise_decay[j]) * z;
            }
            self.state = next;
        }
        self.k += 1;
        Ok(Datum {
            regressor: phi,
            observation: y,
            spec,
            weight: None,
        })
    }
}

/// Generates `horizon` data from the system with the given seed.
pub fn simulate_trajectory(system: &SystemSpec, horizon: usize, seed: u64) -> Result<Vec<Datum>> {
    system.validate(horizon)?;
    let mut sim = Simulator::new(system.clone(), seed);
    (0..horizon).map(|_| sim.step()).collect()
}

/// Per-step weights `b_k`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightPolicy {
    Constant(f64),
    /// `b_k = 1 / y_hat_k`, with `b_k = 1` whenever the prediction is at most 1.
    InversePrediction,
    Sequence(Vec<f64>),
    /// Use the weight carried by each datum.
    FromData,
}

pub const DEFAULT_WEIGHT_FLOOR: f64 = 1e-6;

impl WeightPolicy {
    pub fn validate(&self, horizon: Option<usize>) -> Result<()> {
        match self {
            WeightPolicy::Constant(c) if !(*c > 0.0 && c.is_finite()) => {
                Err(Error::config(format!("weighting assumption violated: constant weight {c} must be positive")))
            }
            WeightPolicy::Sequence(v) => {
                if let Some(b) = v.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
                    return Err(Error::config(format!(
                        "weighting assumption violated: sequence weight {b} must be positive"
                    )));
                }
                match horizon {
                    Some(h) if v.len() < h => Err(Error::config(format!(
                        "weight sequence has {} entries, horizon is {h}",
                        v.len()
                    ))),
                    _ => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    /// Weight for step `k`, clamped into `[floor, 1]`.
    pub fn weight(&self, k: usize, prediction: f64, supplied: Option<f64>, floor: f64) -> Result<f64> {
        let raw = match self {
            WeightPolicy::Constant(c) => *c,
            WeightPolicy::InversePrediction => {
                if prediction <= 1.0 {
                    1.0
                } else {
                    1.0 / prediction
                }
            }
            WeightPolicy::Sequence(v) => *v
                .get(k)
                .ok_or_else(|| Error::config(format!("weight sequence exhausted at step {k}")))?,
            WeightPolicy::FromData => {
                supplied.ok_or_else(|| Error::data(format!("datum {k} carries no weight column")))?
            }
        };
        Ok(raw.clamp(floor, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_system(q: f64) -> SystemSpec {
        SystemSpec {
            theta: DVector::from_vec(vec![5.0, 0.7, 2.0, -0.1, -0.6, -8.0]),
            regressors: RegressorProcess::Ar1 {
                transition: DMatrix::from_diagonal(&DVector::from_vec(vec![0.99, 0.5, 0.9, 0.01, 0.3, 0.7])),
                noise_scale: DVector::from_vec(vec![1.0, 5.0, 5.0, 5.0, 5.0, 5.0]),
                noise_decay: DVector::from_vec(vec![0.0, 0.25, 0.25, 0.25, 0.25, 0.25]),
            },
            true_noise: NoiseModel::mixture(q, 1.0, 10f64.sqrt()).unwrap(),
            saturation: SaturationSchedule::Constant(SaturationSpec::clip(0.0, 25.0).unwrap()),
        }
    }

    #[test]
    fn zero_noise_zero_state_gives_zero_observations() {
        let sys = SystemSpec {
            regressors: RegressorProcess::Ar1 {
                transition: DMatrix::identity(6, 6) * 0.5,
                noise_scale: DVector::zeros(6),
                noise_decay: DVector::zeros(6),
            },
            true_noise: NoiseModel::Zero,
            ..table1_system(0.0)
        };
        let data = simulate_trajectory(&sys, 50, 1).unwrap();
        assert_eq!(data.len(), 50);
        assert!(data.iter().all(|d| d.observation == 0.0 && d.regressor.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn fixed_design_noise_free_observations() {
        let rows: Vec<DVector<f64>> = (0..5)
            .map(|i| DVector::from_vec(vec![1.0, i as f64 * 3.0]))
            .collect();
        let sys = SystemSpec {
            theta: DVector::from_vec(vec![2.0, 2.0]),
            regressors: RegressorProcess::FixedDesign(rows.clone()),
            true_noise: NoiseModel::Zero,
            saturation: SaturationSchedule::Constant(SaturationSpec::clip(0.0, 25.0).unwrap()),
        };
        let data = simulate_trajectory(&sys, 5, 0).unwrap();
        for (d, r) in data.iter().zip(&rows) {
            assert_eq!(d.regressor, *r);
            assert_eq!(d.observation, (2.0 + 2.0 * r[1]).min(25.0));
        }
    }

    #[test]
    fn trajectory_is_deterministic_per_seed() {
        let sys = table1_system(0.2);
        let a = simulate_trajectory(&sys, 10, 42).unwrap();
        let b = simulate_trajectory(&sys, 10, 42).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.observation.to_bits(), y.observation.to_bits());
        }
        let c = simulate_trajectory(&sys, 10, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn regressor_path_is_independent_of_noise_law() {
        let a = simulate_trajectory(&table1_system(0.0), 30, 7).unwrap();
        let b = simulate_trajectory(&table1_system(0.3), 30, 7).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.regressor, y.regressor);
        }
        assert!(a[0].regressor.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut sys = table1_system(0.0);
        sys.theta = DVector::zeros(5);
        assert!(matches!(simulate_trajectory(&sys, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn weight_policy_clamps() {
        let floor = DEFAULT_WEIGHT_FLOOR;
        assert_eq!(WeightPolicy::Constant(1.0).weight(0, 0.0, None, floor).unwrap(), 1.0);
        assert_eq!(WeightPolicy::Constant(3.0).weight(0, 0.0, None, floor).unwrap(), 1.0);
        assert_eq!(WeightPolicy::InversePrediction.weight(0, 0.5, None, floor).unwrap(), 1.0);
        assert_eq!(WeightPolicy::InversePrediction.weight(0, -3.0, None, floor).unwrap(), 1.0);
        assert_eq!(WeightPolicy::InversePrediction.weight(0, 4.0, None, floor).unwrap(), 0.25);
        assert_eq!(WeightPolicy::InversePrediction.weight(0, 1e9, None, floor).unwrap(), floor);
        let seq = WeightPolicy::Sequence(vec![0.5, 0.25]);
        assert_eq!(seq.weight(1, 0.0, None, floor).unwrap(), 0.25);
        assert!(seq.weight(2, 0.0, None, floor).is_err());
        assert!(seq.validate(Some(3)).is_err());
        assert_eq!(WeightPolicy::FromData.weight(0, 0.0, Some(0.3), floor).unwrap(), 0.3);
        assert!(WeightPolicy::FromData.weight(0, 0.0, None, floor).is_err());
        assert!(WeightPolicy::Constant(0.0).validate(None).is_err());
    }
}
