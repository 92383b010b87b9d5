use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{EstimatorSettings, InitialEstimate};
use crate::model::{NoiseModel, RegressorProcess, SaturationSchedule, SaturationSpec, SystemSpec, WeightPolicy};
use crate::projection::{AdmissibleSet, WeightMatrix};

pub const CONFIG_VERSION: u32 = 1;

/// Full declarative description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub system: SystemConfig,
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// True parameter. Optional for datasets, where it is usually unknown.
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    pub regressors: RegressorConfig,
    /// Ignored for datasets.
    #[serde(default)]
    pub true_noise: Option<NoiseConfig>,
    /// Ignored for datasets, which carry per-row thresholds.
    #[serde(default)]
    pub saturation: Option<SaturationSpec>,
    /// Number of steps. For datasets, defaults to the number of rows.
    #[serde(default)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RegressorConfig {
    /// `phi_{k+1} = A phi_k + v_{k+1}` started at zero.
    Ar1 {
        transition: MatrixConfig,
        noise_scale: Vec<f64>,
        noise_decay: Vec<f64>,
    },
    /// Regressor rows given inline, observations simulated.
    Design { rows: Vec<Vec<f64>> },
    /// Regressors and observations read from a CSV file.
    Dataset { path: PathBuf },
}

/// A matrix given either by its diagonal or by its rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixConfig {
    Diagonal(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

impl MatrixConfig {
    pub fn to_matrix(&self, dim: usize, what: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixConfig::Diagonal(d) => {
                if d.len() != dim {
                    return Err(Error::config(format!("{what} diagonal has {} entries, dimension is {dim}", d.len())));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
            }
            MatrixConfig::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::config(format!("{what} must be {dim} x {dim}")));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseConfig {
    Zero,
    Gaussian { sigma: f64 },
    Mixture { q: f64, sigma1: f64, sigma2: f64 },
}

impl NoiseConfig {
    pub fn to_model(self) -> Result<NoiseModel> {
        let m = match self {
            NoiseConfig::Zero => NoiseModel::Zero,
            NoiseConfig::Gaussian { sigma } => NoiseModel::Gaussian { sigma },
            NoiseConfig::Mixture { q, sigma1, sigma2 } => NoiseModel::GaussianMixture { q, sigma1, sigma2 },
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Tswlad,
    L2Baseline,
    Both,
}

impl Algorithm {
    pub fn runs_tswlad(self) -> bool {
        matches!(self, Algorithm::Tswlad | Algorithm::Both)
    }

    pub fn runs_baseline(self) -> bool {
        matches!(self, Algorithm::L2Baseline | Algorithm::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    Constant { value: f64 },
    InversePrediction,
    Sequence { values: Vec<f64> },
    FromData,
}

impl WeightConfig {
    pub fn to_policy(&self) -> WeightPolicy {
        match self {
            WeightConfig::Constant { value } => WeightPolicy::Constant(*value),
            WeightConfig::InversePrediction => WeightPolicy::InversePrediction,
            WeightConfig::Sequence { values } => WeightPolicy::Sequence(values.clone()),
            WeightConfig::FromData => WeightPolicy::FromData,
        }
    }
}

/// Initial estimate: `"centroid"` or an explicit point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Named(InitialName),
    Point(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialName {
    Centroid,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Named(InitialName::Centroid)
    }
}

impl InitialConfig {
    fn to_initial(&self) -> InitialEstimate {
        match self {
            InitialConfig::Named(InitialName::Centroid) => InitialEstimate::Centroid,
            InitialConfig::Point(p) => InitialEstimate::Point(DVector::from_vec(p.clone())),
        }
    }
}

fn one() -> f64 {
    1.0
}

fn default_weight() -> WeightConfig {
    WeightConfig::Constant { value: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    pub algorithm: Algorithm,
    pub assumed_noise: NoiseConfig,
    pub admissible_set: AdmissibleSet,
    #[serde(default = "one")]
    pub mu_bar: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "default_weight")]
    pub weight: WeightConfig,
    #[serde(default)]
    pub initial_bar: InitialConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    /// `P_bar_0 = P_0`; identity when absent.
    #[serde(default)]
    pub initial_gain: Option<MatrixConfig>,
    /// Constant regressor bound `C`; the exact per-step bound when absent.
    #[serde(default)]
    pub bound: Option<f64>,
    /// Number of leading data used only for a least-squares warm start of both
    /// initial estimates. Zero disables it.
    #[serde(default)]
    pub warm_start: usize,
}

impl EstimatorConfig {
    pub fn settings(&self) -> Result<EstimatorSettings> {
        let noise = self.assumed_noise.to_model()?;
        let d = self.admissible_set.dim();
        let mut s = EstimatorSettings::new(noise, self.admissible_set.clone());
        s.preliminary_step_size = self.mu_bar;
        s.accelerated_step_size = self.mu;
        s.initial_preliminary = self.initial_bar.to_initial();
        s.initial_accelerated = self.initial.to_initial();
        if let Some(g) = &self.initial_gain {
            s.initial_gain = g.to_matrix(d, "initial gain")?;
        }
        s.bound_override = self.bound;
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedConfig {
    Count(u64),
    List(Vec<u64>),
}

impl SeedConfig {
    /// Sorted, de-duplicated seed list.
    pub fn seeds(&self) -> Vec<u64> {
        let mut v = match self {
            SeedConfig::Count(n) => (0..*n).collect(),
            SeedConfig::List(v) => v.clone(),
        };
        v.sort_unstable();
        v.dedup();
        v
    }
}

fn default_seeds() -> SeedConfig {
    SeedConfig::Count(1)
}

fn default_true() -> bool {
    true
}

fn default_checkpoint() -> usize {
    100
}

fn default_eigen() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seeds")]
    pub seeds: SeedConfig,
    #[serde(default = "default_true")]
    pub parallel: bool,
    /// Directory for CSV series and the JSON report. Nothing is written when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// A metric row is written every this many steps and at the final step.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    /// Eigenvalue refresh cadence of the information-matrix tracker.
    #[serde(default = "default_eigen")]
    pub eigen_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: default_seeds(),
            parallel: true,
            output: None,
            checkpoint_every: default_checkpoint(),
            eigen_every: default_eigen(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads and parses a config file. Relative dataset paths are resolved
    /// against the file's directory. The result is not yet validated.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display()))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| e.context(path.display()))?;
        if let RegressorConfig::Dataset { path: data } = &mut cfg.system.regressors {
            if data.is_relative() {
                if let Some(dir) = path.parent() {
                    *data = dir.join(&*data);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn dim(&self) -> usize {
        self.estimator.admissible_set.dim()
    }

    pub fn is_dataset(&self) -> bool {
        matches!(self.system.regressors, RegressorConfig::Dataset { .. })
    }

    pub fn theta(&self) -> Option<DVector<f64>> {
        self.system.theta.as_ref().map(|t| DVector::from_vec(t.clone()))
    }

    /// Checks every modelling assumption that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {}, expected {CONFIG_VERSION}",
                self.version
            )));
        }
        let settings = self.estimator.settings()?;
        let d = self.dim();
        for (name, step) in [("mu_bar", self.estimator.mu_bar), ("mu", self.estimator.mu)] {
            if !(step.is_finite() && step > 0.0) {
                return Err(Error::config(format!(
                    "step-size assumption violated: {name} must be positive and finite, got {step}"
                )));
            }
        }
        WeightMatrix::new(settings.initial_gain.clone())
            .map_err(|e| e.context("initial gain must be positive definite"))?;
        for (name, init) in [("initial_bar", &self.estimator.initial_bar), ("initial", &self.estimator.initial)] {
            if let InitialConfig::Point(p) = init {
                if p.len() != d {
                    return Err(Error::config(format!("{name} has {} entries, dimension is {d}", p.len())));
                }
            }
        }

        let policy = self.estimator.weight.to_policy();
        policy.validate(self.system.horizon)?;
        match &self.estimator.weight {
            WeightConfig::Constant { value } if *value > 1.0 => {
                return Err(Error::config(format!(
                    "weighting assumption violated: weights must lie in (0, 1], got {value}"
                )))
            }
            WeightConfig::Sequence { values } if values.iter().any(|b| *b > 1.0) => {
                return Err(Error::config("weighting assumption violated: weights must lie in (0, 1]"))
            }
            _ => {}
        }

        if let Some(theta) = &self.system.theta {
            if theta.len() != d {
                return Err(Error::config(format!(
                    "theta has {} entries, admissible set has dimension {d}",
                    theta.len()
                )));
            }
            if !self.estimator.admissible_set.contains_interior(&DVector::from_vec(theta.clone())) {
                return Err(Error::config(
                    "admissible-set assumption violated: the true parameter must lie in the interior of D",
                ));
            }
        }

        let run = &self.run;
        if run.seeds.seeds().is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if run.checkpoint_every == 0 || run.eigen_every == 0 {
            return Err(Error::config("checkpoint_every and eigen_every must be at least 1"));
        }
        if self.estimator.warm_start > 0 && self.estimator.warm_start < d {
            return Err(Error::config(format!(
                "warm_start needs at least {d} data for a least-squares fit, got {}",
                self.estimator.warm_start
            )));
        }

        if self.is_dataset() {
            return Ok(());
        }
        if matches!(self.estimator.weight, WeightConfig::FromData) {
            return Err(Error::config("weight policy from-data requires a dataset"));
        }
        self.system_spec(None)?.validate(self.horizon_or_zero())?;
        if self.estimator.warm_start > self.horizon_or_zero() {
            return Err(Error::config("warm_start exceeds the horizon"));
        }
        Ok(())
    }

    fn horizon_or_zero(&self) -> usize {
        self.system.horizon.unwrap_or(0)
    }

    /// The simulated system. `horizon` overrides the configured horizon for
    /// the length check on inline designs.
    pub fn system_spec(&self, horizon: Option<usize>) -> Result<SystemSpec> {
        let d = self.dim();
        let theta = self
            .theta()
            .ok_or_else(|| Error::config("a simulated system needs the true parameter theta"))?;
        let regressors = match &self.system.regressors {
            RegressorConfig::Ar1 {
                transition,
                noise_scale,
                noise_decay,
            } => {
                if noise_scale.len() != d || noise_decay.len() != d {
                    return Err(Error::config(format!(
                        "noise_scale and noise_decay must have {d} entries"
                    )));
                }
                RegressorProcess::Ar1 {
                    transition: transition.to_matrix(d, "transition")?,
                    noise_scale: DVector::from_vec(noise_scale.clone()),
                    noise_decay: DVector::from_vec(noise_decay.clone()),
                }
            }
            RegressorConfig::Design { rows } => {
                if let Some(h) = horizon.or(self.system.horizon) {
                    if rows.len() < h {
                        return Err(Error::config(format!("design has {} rows, horizon is {h}", rows.len())));
                    }
                }
                RegressorProcess::FixedDesign(rows.iter().map(|r| DVector::from_vec(r.clone())).collect())
            }
            RegressorConfig::Dataset { .. } => {
                return Err(Error::config("a dataset-driven config has no simulated system"))
            }
        };
        let true_noise = self
            .system
            .true_noise
            .ok_or_else(|| Error::config("a simulated system needs true_noise"))?
            .to_model()?;
        let saturation = self
            .system
            .saturation
            .ok_or_else(|| Error::config("a simulated system needs saturation thresholds"))?;
        Ok(SystemSpec {
            theta,
            regressors,
            true_noise,
            saturation: SaturationSchedule::Constant(saturation),
        })
    }
}
