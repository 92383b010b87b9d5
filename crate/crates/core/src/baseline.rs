//! Squared-loss comparison method ("TSQN-analog").
//!
//! Reuses the two-step skeleton of [`crate::estimator`] but drives it with the
//! residual against the conditional mean of the saturated output,
//! `G(x) = E[S(x + eps)]`, and slopes built from `G'`. This is a
//! reconstruction of a two-step quasi-Newton scheme, not a verbatim port.

use crate::error::{Error, Result};
use crate::estimator::{step1_slope_radius, Drive, EstimatorSettings, StepInputs, TwoStepEstimator, UpdateRule, SLOPE_DIFF_EPS};
use crate::model::{std_normal_pdf, NoiseModel, SaturationSpec};

const QUAD_TOL: f64 = 1e-10;
const QUAD_MAX_DEPTH: u32 = 50;
const GRID_POINTS: usize = 4097;

/// Noise law plus thresholds; defines `G(x) = E[S(x + eps)]`.
#[derive(Debug, Clone)]
pub struct SaturatedMeanModel {
    pub noise: NoiseModel,
    pub spec: SaturationSpec,
}

impl SaturatedMeanModel {
    pub fn new(noise: NoiseModel, spec: SaturationSpec) -> Result<Self> {
        noise.validate_assumed()?;
        spec.validate()?;
        Ok(Self { noise, spec })
    }

    /// `G(x)`.
    pub fn mean(&self, x: f64) -> Result<f64> {
        let s = &self.spec;
        let (a, b) = (s.lower_threshold - x, s.upper_threshold - x);
        let fa = self.noise.cdf(a);
        let fb = self.noise.cdf(b);
        let mut g = 0.0;
        if fa > 0.0 {
            g += s.lower_clip * fa;
        }
        if fb < 1.0 {
            g += s.upper_clip * (1.0 - fb);
        }
        if fb > fa {
            g += x * (fb - fa) + self.first_moment(a, b)?;
        }
        Ok(g)
    }

    /// `G'(x) = F(u - x) - F(l - x)`.
    pub fn slope(&self, x: f64) -> f64 {
        let s = &self.spec;
        (self.noise.cdf(s.upper_threshold - x) - self.noise.cdf(s.lower_threshold - x)).max(0.0)
    }

    /// `inf_{|x| <= r} G'(x)`.
    pub fn slope_inf_on(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        match self.noise {
            // G' is the noise density smoothed by an indicator, hence unimodal;
            // its minimum over an interval sits at an endpoint.
            NoiseModel::Gaussian { .. } | NoiseModel::GaussianMixture { .. } => self.slope(-r).min(self.slope(r)),
            _ => {
                let h = 2.0 * r / (GRID_POINTS - 1) as f64;
                (0..GRID_POINTS)
                    .map(|i| self.slope(-r + h * i as f64))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// `int_a^b t f(t) dt`.
    fn first_moment(&self, a: f64, b: f64) -> Result<f64> {
        let gauss = |sigma: f64| {
            let dens = |t: f64| {
                if t.is_infinite() {
                    0.0
                } else {
                    std_normal_pdf(t / sigma) / sigma
                }
            };
            sigma * sigma * (dens(a) - dens(b))
        };
        match self.noise {
            NoiseModel::Gaussian { sigma } => Ok(gauss(sigma)),
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => Ok((1.0 - q) * gauss(sigma1) + q * gauss(sigma2)),
            NoiseModel::Zero => Ok(0.0),
            NoiseModel::Custom(_) => {
                let lo = if a.is_finite() { a } else { self.noise.quantile(1e-13)? };
                let hi = if b.is_finite() { b } else { self.noise.quantile(1.0 - 1e-13)? };
                if hi <= lo {
                    return Ok(0.0);
                }
                adaptive_simpson(|t| t * self.noise.pdf(t), lo, hi, QUAD_TOL)
            }
        }
    }
}

/// Free-function form of [`SaturatedMeanModel::mean`].
pub fn saturated_mean(x: f64, m: &SaturatedMeanModel) -> Result<f64> {
    m.mean(x)
}

/// Free-function form of [`SaturatedMeanModel::slope`].
pub fn saturated_mean_slope(x: f64, m: &SaturatedMeanModel) -> f64 {
    m.slope(x)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::numerical(format!(
                "quadrature did not converge on [{a}, {b}] (error estimate {:e})",
                delta.abs() / 15.0
            )));
        }
        Ok(recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, QUAD_MAX_DEPTH)
}

/// Residual-against-conditional-mean rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct L2Rule;

impl UpdateRule for L2Rule {
    fn name(&self) -> &'static str {
        "tsqn-analog"
    }

    fn preliminary(&self, s: &StepInputs) -> Result<Drive> {
        let spec = s.datum.spec;
        let m = SaturatedMeanModel {
            noise: s.noise.clone(),
            spec,
        };
        let x = s.preliminary_output;
        let r = step1_slope_radius(s.bound, spec.lower_threshold, spec.upper_threshold);
        Ok(Drive {
            innovation: s.datum.observation - m.mean(x)?,
            slope: m.slope_inf_on(r),
            regime: spec.classify(x),
        })
    }

    fn accelerated(&self, s: &StepInputs) -> Result<Drive> {
        let spec = s.datum.spec;
        let m = SaturatedMeanModel {
            noise: s.noise.clone(),
            spec,
        };
        let (x, x_bar) = (s.accelerated_output, s.preliminary_output);
        let g = m.mean(x)?;
        let d = x_bar - x;
        let slope = if d.abs() < SLOPE_DIFF_EPS {
            m.slope(x)
        } else {
            ((m.mean(x_bar)? - g) / d).max(0.0)
        };
        Ok(Drive {
            innovation: s.datum.observation - g,
            slope,
            regime: spec.classify(x),
        })
    }
}

/// The squared-loss comparison estimator.
pub type L2Baseline = TwoStepEstimator<L2Rule>;

impl L2Baseline {
    pub fn baseline(settings: &EstimatorSettings) -> Result<Self> {
        Self::new(L2Rule, settings)
    }
}

/// Functional form of one baseline update, using the datum weight (or 1).
pub fn baseline_update(state: &L2Baseline, datum: &crate::model::Datum) -> Result<L2Baseline> {
    let mut next = state.clone();
    next.update(datum, datum.weight.unwrap_or(1.0))?;
    Ok(next)
}
