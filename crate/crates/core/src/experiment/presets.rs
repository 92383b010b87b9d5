//! Built-in experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{
    Algorithm, EstimatorConfig, ExperimentConfig, InitialConfig, MatrixConfig, NoiseConfig, RegressorConfig,
    RunConfig, SeedConfig, SystemConfig, WeightConfig, CONFIG_VERSION,
};
use crate::error::{Error, Result};
use crate::model::SaturationSpec;
use crate::projection::AdmissibleSet;

pub const PRESET_NAMES: [&str; 3] = ["table1", "fig-regret", "sentencing-demo"];

/// Contamination probabilities swept by `table1`.
pub const TABLE1_Q: [f64; 4] = [0.0, 0.1, 0.2, 0.3];

pub const TABLE1_THETA: [f64; 6] = [5.0, 0.7, 2.0, -0.1, -0.6, -8.0];
pub const TABLE1_HORIZON: usize = 10_000;

const SENTENCING_THETA: [f64; 6] = [12.0, 10.0, 6.0, 4.0, 5.0, 8.0];
const SENTENCING_ROWS: usize = 20_000;
const SENTENCING_DESIGN_SEED: u64 = 0x5e47;

/// The six-dimensional AR(1) system clipped to `[0, 25]`, observed through
/// `N(0, 1)` noise contaminated by `N(0, 10)` with probability `q`.
pub fn table1_config(q: f64, seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        system: SystemConfig {
            theta: Some(TABLE1_THETA.to_vec()),
            regressors: RegressorConfig::Ar1 {
                transition: MatrixConfig::Diagonal(vec![0.99, 0.5, 0.9, 0.01, 0.3, 0.7]),
                noise_scale: vec![1.0, 5.0, 5.0, 5.0, 5.0, 5.0],
                noise_decay: vec![0.0, 0.25, 0.25, 0.25, 0.25, 0.25],
            },
            true_noise: Some(NoiseConfig::Mixture {
                q,
                sigma1: 1.0,
                sigma2: 10f64.sqrt(),
            }),
            saturation: Some(SaturationSpec {
                lower_clip: 0.0,
                lower_threshold: 0.0,
                upper_threshold: 25.0,
                upper_clip: 25.0,
            }),
            horizon: Some(TABLE1_HORIZON),
        },
        estimator: EstimatorConfig {
            algorithm: Algorithm::Both,
            assumed_noise: NoiseConfig::Gaussian { sigma: 1.0 },
            admissible_set: AdmissibleSet::cube(6, 10.0),
            mu_bar: 1.0,
            mu: 1.0,
            weight: WeightConfig::Constant { value: 1.0 },
            initial_bar: InitialConfig::Point(vec![0.0; 6]),
            initial: InitialConfig::Point(vec![0.0; 6]),
            initial_gain: None,
            bound: None,
            warm_start: 0,
        },
        run: RunConfig {
            seeds: SeedConfig::Count(seeds),
            ..RunConfig::default()
        },
    }
}

/// Averaged-regret trajectories: the `table1` system at `q = 0`, one seed,
/// dense checkpoints.
pub fn fig_regret_config() -> ExperimentConfig {
    let mut cfg = table1_config(0.0, 1);
    cfg.estimator.algorithm = Algorithm::Tswlad;
    cfg.run.checkpoint_every = 10;
    cfg
}

/// Synthetic sentencing-style design: an intercept, three binary
/// circumstances, an offence count in `0..=4` and an amount in `[0, 3)`.
pub fn sentencing_design(rows: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..rows)
        .map(|_| {
            vec![
                1.0,
                f64::from(u8::from(rng.random_bool(0.5))),
                f64::from(u8::from(rng.random_bool(0.4))),
                f64::from(u8::from(rng.random_bool(0.3))),
                f64::from(rng.random_range(0..=4u8)),
                rng.random_range(0.0..3.0),
            ]
        })
        .collect()
}

/// Stand-in for a real sentencing dataset: a fixed design, sentences clipped
/// to a statutory range of 6 to 60 months, `N(0, 25)` noise with 15%
/// contamination by `N(0, 2500)`, weights `1 / y_hat` and a least-squares
/// warm start.
pub fn sentencing_demo_config(seeds: u64) -> ExperimentConfig {
    ExperimentConfig {
        version: CONFIG_VERSION,
        system: SystemConfig {
            theta: Some(SENTENCING_THETA.to_vec()),
            regressors: RegressorConfig::Design {
                rows: sentencing_design(SENTENCING_ROWS, SENTENCING_DESIGN_SEED),
            },
            true_noise: Some(NoiseConfig::Mixture {
                q: 0.15,
                sigma1: 5.0,
                sigma2: 50.0,
            }),
            saturation: Some(SaturationSpec {
                lower_clip: 6.0,
                lower_threshold: 6.0,
                upper_threshold: 60.0,
                upper_clip: 60.0,
            }),
            horizon: Some(SENTENCING_ROWS),
        },
        estimator: EstimatorConfig {
            algorithm: Algorithm::Both,
            assumed_noise: NoiseConfig::Gaussian { sigma: 5.0 },
            admissible_set: AdmissibleSet::cube(6, 40.0),
            mu_bar: 1000.0,
            mu: 25.0,
            weight: WeightConfig::InversePrediction,
            initial_bar: InitialConfig::default(),
            initial: InitialConfig::default(),
            initial_gain: None,
            bound: None,
            warm_start: 500,
        },
        run: RunConfig {
            seeds: SeedConfig::Count(seeds),
            ..RunConfig::default()
        },
    }
}

fn q_label(q: f64) -> String {
    format!("table1-q{q}")
}

/// Expands a preset into labelled configs. `seeds` overrides the default
/// replicate count (20 for `table1` and `sentencing-demo`, 1 for `fig-regret`).
pub fn preset(name: &str, seeds: Option<u64>) -> Result<Vec<(String, ExperimentConfig)>> {
    match name {
        "table1" => Ok(TABLE1_Q
            .iter()
            .map(|&q| (q_label(q), table1_config(q, seeds.unwrap_or(20))))
            .collect()),
        "fig-regret" => {
            let mut cfg = fig_regret_config();
            if let Some(n) = seeds {
                cfg.run.seeds = SeedConfig::Count(n);
            }
            Ok(vec![(name.to_string(), cfg)])
        }
        "sentencing-demo" => Ok(vec![(name.to_string(), sentencing_demo_config(seeds.unwrap_or(20)))]),
        _ => Err(Error::config(format!(
            "unknown preset '{name}', expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates() {
        for name in PRESET_NAMES {
            for (label, cfg) in preset(name, None).unwrap() {
                cfg.validate().unwrap_or_else(|e| panic!("{label}: {e}"));
            }
        }
    }

    #[test]
    fn table1_sweeps_four_q_values() {
        let runs = preset("table1", Some(3)).unwrap();
        let labels: Vec<&str> = runs.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(labels, ["table1-q0", "table1-q0.1", "table1-q0.2", "table1-q0.3"]);
        assert_eq!(runs[0].1.run.seeds.seeds().len(), 3);
    }

    #[test]
    fn unknown_preset_is_config_error() {
        assert_eq!(preset("table2", None).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sentencing_design_is_fixed() {
        assert_eq!(sentencing_design(5, 1), sentencing_design(5, 1));
        let rows = sentencing_design(200, 3);
        assert!(rows.iter().all(|r| r[0] == 1.0 && (0.0..=4.0).contains(&r[4])));
    }

    #[test]
    fn presets_survive_toml() {
        let cfg = table1_config(0.2, 20);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
