use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const GRID_POINTS: usize = 4097;
const QUANTILE_MAX_ITER: usize = 200;
const QUANTILE_TOL: f64 = 1e-10;

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// A user-supplied noise law. The density must be continuous and the CDF
/// must satisfy `F(0) = 1/2`.
pub trait NoiseDistribution: Send + Sync + fmt::Debug {
    fn cdf(&self, x: f64) -> f64;
    fn pdf(&self, x: f64) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn variance(&self) -> Option<f64>;
    /// Declares that the density is symmetric about 0 and non-increasing in `|x|`,
    /// which turns the infimum/supremum over a centred interval into closed forms.
    fn symmetric_unimodal(&self) -> bool {
        false
    }
}

/// Conditional noise law of the observation model.
#[derive(Clone, Debug)]
pub enum NoiseModel {
    /// Point mass at zero. Valid only as the true noise of a simulation.
    Zero,
    Gaussian { sigma: f64 },
    /// `N(0, sigma1^2)` with probability `1 - q`, `N(0, sigma2^2)` with probability `q`.
    GaussianMixture { q: f64, sigma1: f64, sigma2: f64 },
    Custom(Arc<dyn NoiseDistribution>),
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let m = NoiseModel::Gaussian { sigma };
        m.validate()?;
        Ok(m)
    }

    pub fn mixture(q: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        let m = NoiseModel::GaussianMixture { q, sigma1, sigma2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseModel::Zero => Ok(()),
            NoiseModel::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::config(format!("gaussian sigma must be positive, got {sigma}")));
                }
                Ok(())
            }
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(Error::config(format!("mixture probability q must lie in [0, 1], got {q}")));
                }
                for s in [sigma1, sigma2] {
                    if !(s.is_finite() && s > 0.0) {
                        return Err(Error::config(format!("mixture sigma must be positive, got {s}")));
                    }
                }
                Ok(())
            }
            NoiseModel::Custom(ref d) => {
                let f0 = d.cdf(0.0);
                if (f0 - 0.5).abs() > 1e-9 {
                    return Err(Error::config(format!(
                        "noise median assumption violated: F(0) = {f0}, expected 1/2"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Checks the extra requirements on a model the estimator evaluates:
    /// a continuous density that is known.
    pub fn validate_assumed(&self) -> Result<()> {
        self.validate()?;
        if matches!(self, NoiseModel::Zero) {
            return Err(Error::config(
                "noise density assumption violated: the assumed noise must have a continuous density",
            ));
        }
        Ok(())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Zero => {
                if x >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseModel::Gaussian { sigma } => std_normal_cdf(x / sigma),
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => {
                (1.0 - q) * std_normal_cdf(x / sigma1) + q * std_normal_cdf(x / sigma2)
            }
            NoiseModel::Custom(ref d) => d.cdf(x),
        }
    }

    /// Density. The point mass has no density and reports 0 away from the origin
    /// and infinity at it.
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            NoiseModel::Zero => {
                if x == 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            NoiseModel::Gaussian { sigma } => std_normal_pdf(x / sigma) / sigma,
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => {
                (1.0 - q) * std_normal_pdf(x / sigma1) / sigma1 + q * std_normal_pdf(x / sigma2) / sigma2
            }
            NoiseModel::Custom(ref d) => d.pdf(x),
        }
    }

    /// `(F(x), f(x))`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        (self.cdf(x), self.pdf(x))
    }

    pub fn variance(&self) -> Option<f64> {
        match *self {
            NoiseModel::Zero => Some(0.0),
            NoiseModel::Gaussian { sigma } => Some(sigma * sigma),
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => {
                Some((1.0 - q) * sigma1 * sigma1 + q * sigma2 * sigma2)
            }
            NoiseModel::Custom(ref d) => d.variance(),
        }
    }

    /// Draws one noise value. The mixture always consumes one uniform and one
    /// normal draw regardless of the selected component.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseModel::Zero => 0.0,
            NoiseModel::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            NoiseModel::GaussianMixture { q, sigma1, sigma2 } => {
                let u: f64 = rng.random();
                let z: f64 = rng.sample(StandardNormal);
                if u < q {
                    sigma2 * z
                } else {
                    sigma1 * z
                }
            }
            NoiseModel::Custom(ref d) => {
                let mut adapter = RngAdapter(rng);
                d.sample(&mut adapter)
            }
        }
    }

    fn symmetric_unimodal(&self) -> bool {
        match self {
            NoiseModel::Zero | NoiseModel::Gaussian { .. } | NoiseModel::GaussianMixture { .. } => true,
            NoiseModel::Custom(d) => d.symmetric_unimodal(),
        }
    }

    /// `inf_{|x| <= radius} f(x)`.
    pub fn pdf_inf_on(&self, radius: f64) -> f64 {
        let r = radius.max(0.0);
        if r == 0.0 {
            return self.pdf(0.0);
        }
        if self.symmetric_unimodal() {
            return self.pdf(r);
        }
        grid_extremum(|x| self.pdf(x), r, false)
    }

    /// `sup_{|x| <= radius} f(x)`.
    pub fn pdf_sup_on(&self, radius: f64) -> f64 {
        let r = radius.max(0.0);
        if r == 0.0 || self.symmetric_unimodal() {
            return self.pdf(0.0);
        }
        grid_extremum(|x| self.pdf(x), r, true)
    }

    /// Inverse CDF by bracketing bisection.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::config(format!("quantile level must lie in (0, 1), got {p}")));
        }
        let mut lo = -1.0f64;
        let mut hi = 1.0f64;
        while self.cdf(lo) > p {
            lo *= 2.0;
            if !lo.is_finite() {
                return Err(Error::numerical(format!("quantile({p}): could not bracket from below")));
            }
        }
        while self.cdf(hi) < p {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::numerical(format!("quantile({p}): could not bracket from above")));
            }
        }
        let mut mid = 0.5 * (lo + hi);
        for _ in 0..QUANTILE_MAX_ITER {
            mid = 0.5 * (lo + hi);
            let fm = self.cdf(mid);
            if fm == p || hi - lo <= 4.0 * f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
            if fm < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (self.cdf(mid) - p).abs() <= QUANTILE_TOL {
            return Ok(mid);
        }
        Err(Error::numerical(format!(
            "quantile({p}) did not converge after {QUANTILE_MAX_ITER} bisections (last x = {mid}, F = {})",
            self.cdf(mid)
        )))
    }
}

/// Free-function forms.
pub fn noise_eval(m: &NoiseModel, x: f64) -> (f64, f64) {
    m.eval(x)
}

pub fn noise_quantile(m: &NoiseModel, p: f64) -> Result<f64> {
    m.quantile(p)
}

struct RngAdapter<'a, R: Rng + ?Sized>(&'a mut R);

impl<R: Rng + ?Sized> RngCore for RngAdapter<'_, R> {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}

// Grid search over [-r, r] followed by ternary refinement around the best node.
fn grid_extremum(f: impl Fn(f64) -> f64, r: f64, maximize: bool) -> f64 {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |x: f64| sign * f(x);
    let h = 2.0 * r / (GRID_POINTS - 1) as f64;
    let (mut best_i, mut best) = (0usize, f64::INFINITY);
    for i in 0..GRID_POINTS {
        let v = g(-r + h * i as f64);
        if v < best {
            best = v;
            best_i = i;
        }
    }
    let mut a = (-r + h * best_i.saturating_sub(1) as f64).max(-r);
    let mut b = (-r + h * (best_i + 1) as f64).min(r);
    while b - a > 1e-10 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if g(m1) <= g(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    let refined = g(0.5 * (a + b));
    sign * refined.min(best)
}
