//! Declarative Monte Carlo experiments: configuration, built-in presets,
//! dataset and CSV I/O, and the replicate runner.

mod config;
mod io;
mod presets;

pub use config::{
    Algorithm, EstimatorConfig, ExperimentConfig, InitialConfig, InitialName, MatrixConfig, NoiseConfig,
    RegressorConfig, RunConfig, SeedConfig, SystemConfig, WeightConfig, CONFIG_VERSION,
};
pub use io::{
    dataset_header, emit_csv, emit_dataset, load_dataset, load_series, read_dataset, read_series, write_dataset,
    write_series, SERIES_COLUMNS,
};
pub use presets::{
    fig_regret_config, preset, sentencing_demo_config, sentencing_design, table1_config, PRESET_NAMES, TABLE1_HORIZON,
    TABLE1_Q, TABLE1_THETA,
};

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baseline::{L2Baseline, L2Rule};
use crate::diagnostics::{sentencing_accuracy, MetricSeries, MetricsRecorder};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorSettings, InitialEstimate, LadRule, TwoStepEstimator, UpdateRule};
use crate::model::{simulate_trajectory, Datum, WeightPolicy, DEFAULT_WEIGHT_FLOOR};

/// Outcome of one algorithm on one seed.
#[derive(Debug, Clone, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// `||theta - theta_n||`, absent when the true parameter is unknown.
    pub final_error: Option<f64>,
    pub final_error_bar: Option<f64>,
    /// Averaged weighted absolute prediction error over the run.
    pub pred_err_avg: f64,
    /// `1 - mean(|y - y_hat| / y)`, present when every observation is positive.
    pub accuracy: Option<f64>,
    /// CSV file name of the metric series inside the output directory.
    pub series_file: Option<String>,
    #[serde(skip)]
    pub series: MetricSeries,
}

/// Median and quartiles of the final errors (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub min: f64,
    pub lower_quartile: f64,
    pub median: f64,
    pub upper_quartile: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            lower_quartile: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            upper_quartile: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgorithmReport {
    pub algorithm: String,
    pub seeds: Vec<SeedOutcome>,
    pub final_error: Option<Summary>,
    pub accuracy: Option<Summary>,
}

impl AlgorithmReport {
    pub fn final_errors(&self) -> Vec<f64> {
        self.seeds.iter().filter_map(|s| s.final_error).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON form of the config, output path and
    /// parallelism excluded.
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub label: String,
    pub horizon: usize,
    pub algorithms: Vec<AlgorithmReport>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn algorithm(&self, name: &str) -> Option<&AlgorithmReport> {
        self.algorithms.iter().find(|a| a.algorithm == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::numerical(e.to_string()))
    }
}

pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut canonical = cfg.clone();
    canonical.run.output = None;
    canonical.run.parallel = true;
    let bytes = serde_json::to_vec(&canonical).map_err(|e| Error::config(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Per-replicate trace shared by both algorithms.
struct Trace {
    series: MetricSeries,
    final_error: Option<f64>,
    final_error_bar: Option<f64>,
    pred_err_avg: f64,
    accuracy: Option<f64>,
}

/// Least-squares fit on `data`, used as a warm start.
fn least_squares(data: &[Datum]) -> Result<DVector<f64>> {
    let d = data[0].dim();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for datum in data {
        gram.ger(1.0, &datum.regressor, &datum.regressor, 1.0);
        rhs.axpy(datum.observation, &datum.regressor, 1.0);
    }
    let eig = gram.clone().symmetric_eigenvalues();
    let collinear = || Error::numerical("warm start: regressors of the warm-start window are collinear");
    if eig.min() <= 1e-10 * eig.max().max(f64::MIN_POSITIVE) {
        return Err(collinear());
    }
    gram.cholesky().map(|c| c.solve(&rhs)).ok_or_else(collinear)
}

fn track<R: UpdateRule>(
    mut est: TwoStepEstimator<R>,
    data: &[Datum],
    theta: Option<&DVector<f64>>,
    policy: &WeightPolicy,
    settings: &EstimatorSettings,
    run: &RunConfig,
) -> Result<Trace> {
    let mut rec = MetricsRecorder::new(theta.cloned(), &settings.initial_gain, run.eigen_every)?;
    let n = data.len();
    let mut pairs = Vec::with_capacity(n);
    for (k, datum) in data.iter().enumerate() {
        let step = |e: Error| e.context(format!("step {k}"));
        let prediction = est.predict(&datum.regressor, &datum.spec);
        let weight = policy
            .weight(k, prediction, datum.weight, DEFAULT_WEIGHT_FLOOR)
            .map_err(step)?;
        rec.record(&datum.regressor, &datum.spec, weight, datum.observation, prediction);
        pairs.push((datum.observation, prediction));
        est.update(datum, weight).map_err(step)?;
        if (k + 1) % run.checkpoint_every == 0 || k + 1 == n {
            rec.checkpoint(est.estimate(), est.preliminary_estimate(), &est.accelerated.information);
        }
    }
    let pred_err_avg = rec.rows().last().map_or(0.0, |r| r.pred_err_avg);
    let accuracy = if !pairs.is_empty() && pairs.iter().all(|(y, _)| *y > 0.0) {
        Some(sentencing_accuracy(pairs.iter().copied())?)
    } else {
        None
    };
    Ok(Trace {
        final_error: theta.map(|t| (t - est.estimate()).norm()),
        final_error_bar: theta.map(|t| (t - est.preliminary_estimate()).norm()),
        pred_err_avg,
        accuracy,
        series: rec.into_rows(),
    })
}

type Replicate = (u64, Option<Trace>, Option<Trace>);

fn replicate(cfg: &ExperimentConfig, dataset: Option<&[Datum]>, seed: u64) -> Result<Replicate> {
    let owned;
    let data: &[Datum] = match dataset {
        Some(d) => d,
        None => {
            let horizon = cfg.system.horizon.unwrap_or(0);
            owned = simulate_trajectory(&cfg.system_spec(Some(horizon))?, horizon, seed)?;
            &owned
        }
    };
    let mut settings = cfg.estimator.settings()?;
    let warm = cfg.estimator.warm_start.min(data.len());
    if warm > 0 {
        let ls = least_squares(&data[..warm])?;
        settings.initial_preliminary = InitialEstimate::Point(ls.clone());
        settings.initial_accelerated = InitialEstimate::Point(ls);
    }
    let data = &data[warm..];
    let theta = cfg.theta();
    let policy = cfg.estimator.weight.to_policy();
    let algo = cfg.estimator.algorithm;
    let lad = if algo.runs_tswlad() {
        let est = TwoStepEstimator::new(LadRule, &settings)?;
        Some(track(est, data, theta.as_ref(), &policy, &settings, &cfg.run)?)
    } else {
        None
    };
    let l2 = if algo.runs_baseline() {
        let est: L2Baseline = TwoStepEstimator::new(L2Rule, &settings)?;
        Some(track(est, data, theta.as_ref(), &policy, &settings, &cfg.run)?)
    } else {
        None
    };
    Ok((seed, lad, l2))
}

fn algorithm_report(name: &str, traces: Vec<(u64, Trace)>) -> AlgorithmReport {
    let seeds: Vec<SeedOutcome> = traces
        .into_iter()
        .map(|(seed, t)| SeedOutcome {
            seed,
            final_error: t.final_error,
            final_error_bar: t.final_error_bar,
            pred_err_avg: t.pred_err_avg,
            accuracy: t.accuracy,
            series_file: None,
            series: t.series,
        })
        .collect();
    let errors: Vec<f64> = seeds.iter().filter_map(|s| s.final_error).collect();
    let acc: Vec<f64> = seeds.iter().filter_map(|s| s.accuracy).collect();
    AlgorithmReport {
        algorithm: name.to_string(),
        final_error: Summary::of(&errors),
        accuracy: Summary::of(&acc),
        seeds,
    }
}

/// Runs every seed of `cfg` and writes outputs when `cfg.run.output` is set.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_labelled(cfg, "run")
}

/// As [`run_experiment`], with output files prefixed by `label`.
pub fn run_labelled(cfg: &ExperimentConfig, label: &str) -> Result<RunReport> {
    cfg.validate()?;
    let dataset = match &cfg.system.regressors {
        RegressorConfig::Dataset { path } => {
            let mut data = load_dataset(path, Some(cfg.dim()))?;
            if let Some(h) = cfg.system.horizon {
                if h > data.len() {
                    return Err(Error::config(format!(
                        "horizon {h} exceeds the {} rows of {}",
                        data.len(),
                        path.display()
                    )));
                }
                data.truncate(h);
            }
            if cfg.estimator.warm_start > data.len() {
                return Err(Error::config("warm_start exceeds the number of data"));
            }
            Some(data)
        }
        _ => None,
    };
    let horizon = dataset
        .as_ref()
        .map_or(cfg.system.horizon.unwrap_or(0), Vec::len)
        .saturating_sub(cfg.estimator.warm_start);

    let seeds = cfg.run.seeds.seeds();
    let one = |&seed: &u64| replicate(cfg, dataset.as_deref(), seed).map_err(|e| e.context(format!("seed {seed}")));
    let mut results: Vec<Replicate> = if cfg.run.parallel {
        seeds.par_iter().map(one).collect::<Result<_>>()?
    } else {
        seeds.iter().map(one).collect::<Result<_>>()?
    };
    results.sort_by_key(|r| r.0);

    let mut lad = Vec::new();
    let mut l2 = Vec::new();
    for (seed, a, b) in results {
        if let Some(t) = a {
            lad.push((seed, t));
        }
        if let Some(t) = b {
            l2.push((seed, t));
        }
    }
    let mut algorithms = Vec::new();
    if cfg.estimator.algorithm.runs_tswlad() {
        algorithms.push(algorithm_report(LadRule.name(), lad));
    }
    if cfg.estimator.algorithm.runs_baseline() {
        algorithms.push(algorithm_report(L2Rule.name(), l2));
    }

    let mut report = RunReport {
        label: label.to_string(),
        horizon,
        algorithms,
        provenance: Provenance {
            config_sha256: config_hash(cfg)?,
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    if let Some(dir) = &cfg.run.output {
        write_outputs(&mut report, dir)?;
    }
    Ok(report)
}

/// Writes one CSV per algorithm and seed plus `<label>-report.json`.
pub fn write_outputs(report: &mut RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(dir.display()))?;
    for alg in &mut report.algorithms {
        for s in &mut alg.seeds {
            let name = format!("{}-{}-seed{}.csv", report.label, alg.algorithm, s.seed);
            emit_csv(&s.series, &dir.join(&name))?;
            s.series_file = Some(name);
        }
    }
    let path = dir.join(format!("{}-report.json", report.label));
    std::fs::write(&path, report.to_json()? + "\n").map_err(|e| Error::from(e).context(path.display()))?;
    Ok(())
}
