//! The two-step recursive identification scheme.
//!
//! Step 1 runs a conservative recursion whose gain slope is the infimum of the
//! noise density over the reachable range. Step 2 reuses the same datum with a
//! data-driven slope (a divided difference between the two current estimates)
//! and converges faster. Both steps share [`StepState::update`]: a rank-one
//! gain-matrix downdate followed by a projection onto the admissible set in
//! the norm induced by the new information matrix.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Datum, NoiseModel, Regime, SaturationSpec};
use crate::projection::{project, AdmissibleSet, WeightMatrix};

/// Divided differences with `|d_k|` below this use the density limit.
pub const SLOPE_DIFF_EPS: f64 = 1e-12;

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Innovation driving one recursion step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Innovation {
    pub value: f64,
    pub regime: Regime,
}

/// Innovation at the predicted linear output `x = phi^T theta_hat`:
/// the sign of the residual plus the CDF correction of the saturated regime.
pub fn innovation_at(y: f64, x: f64, spec: &SaturationSpec, noise: &NoiseModel) -> Innovation {
    let regime = spec.classify(x);
    let mut v = sgn(y - spec.saturate(x));
    match regime {
        Regime::Upper => v += noise.cdf(spec.upper_threshold - x),
        Regime::Lower => v -= 1.0 - noise.cdf(spec.lower_threshold - x),
        Regime::Interior => {}
    }
    Innovation { value: v, regime }
}

pub fn innovation(
    y: f64,
    phi: &DVector<f64>,
    estimate: &DVector<f64>,
    spec: &SaturationSpec,
    noise: &NoiseModel,
) -> Innovation {
    innovation_at(y, phi.dot(estimate), spec, noise)
}

/// Radius of the interval over which the step-1 slope takes its infimum.
pub fn step1_slope_radius(bound: f64, lower_threshold: f64, upper_threshold: f64) -> f64 {
    let r = (2.0 * bound)
        .max(bound + lower_threshold)
        .max(bound - upper_threshold)
        .max(0.0);
    if r.is_nan() {
        0.0
    } else {
        r
    }
}

/// `inf_{|x| <= R} f(x)` with `R = max{2C, C + l, C - u, 0}`.
pub fn step1_gain_slope(noise: &NoiseModel, bound: f64, lower_threshold: f64, upper_threshold: f64) -> f64 {
    noise.pdf_inf_on(step1_slope_radius(bound, lower_threshold, upper_threshold))
}

/// Step-2 slope from the linear outputs `x = phi^T theta_k` and `x_bar = phi^T theta_bar_k`.
pub fn step2_gain_slope_at(noise: &NoiseModel, spec: &SaturationSpec, x: f64, x_bar: f64) -> f64 {
    let d = x_bar - x;
    let near_zero = d.abs() < SLOPE_DIFF_EPS;
    let slope = match spec.classify(x) {
        Regime::Lower => {
            let l = spec.lower_threshold;
            if near_zero {
                noise.pdf(l - x)
            } else {
                (noise.cdf(l - x) - noise.cdf(l - x_bar)) / d
            }
        }
        Regime::Interior => {
            if near_zero {
                2.0 * noise.pdf(0.0)
            } else {
                (1.0 - 2.0 * noise.cdf(-d)) / d
            }
        }
        Regime::Upper => {
            let u = spec.upper_threshold;
            if near_zero {
                noise.pdf(u - x)
            } else {
                (noise.cdf(u - x) - noise.cdf(u - x_bar)) / d
            }
        }
    };
    slope.max(0.0)
}

pub fn step2_gain_slope(
    noise: &NoiseModel,
    spec: &SaturationSpec,
    phi: &DVector<f64>,
    theta: &DVector<f64>,
    theta_bar: &DVector<f64>,
) -> f64 {
    step2_gain_slope_at(noise, spec, phi.dot(theta), phi.dot(theta_bar))
}

/// State of one recursion: estimate, gain matrix `P`, its inverse, the
/// step-size factor `mu` and the last gain `a` and slope `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub estimate: DVector<f64>,
    pub gain: DMatrix<f64>,
    /// `P^{-1}`, tracked alongside `P` by rank-one additions.
    pub information: DMatrix<f64>,
    pub step_size: f64,
    pub last_gain: f64,
    pub last_slope: f64,
}

impl StepState {
    pub fn new(estimate: DVector<f64>, gain: DMatrix<f64>, step_size: f64) -> Result<Self> {
        if gain.nrows() != estimate.len() || !gain.is_square() {
            return Err(Error::config(format!(
                "initial gain matrix is {}x{}, estimate has dimension {}",
                gain.nrows(),
                gain.ncols(),
                estimate.len()
            )));
        }
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::config(format!(
                "step-size factor must be positive and finite, got {step_size}"
            )));
        }
        let information = WeightMatrix::new(gain.clone())
            .map_err(|_| Error::config("initial gain matrix must be symmetric positive definite"))?
            .matrix()
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::config("initial gain matrix must be symmetric positive definite"))?;
        Ok(Self {
            estimate,
            gain,
            information,
            step_size,
            last_gain: 1.0 / step_size,
            last_slope: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.estimate.len()
    }

    /// One recursion step:
    /// `a = 1 / (mu + beta b^2 phi^T P phi)`,
    /// `P' = P - a beta b^2 P phi phi^T P`,
    /// `estimate' = Proj_{P'^{-1}}(estimate + a b P phi v)`.
    pub fn update(
        &mut self,
        phi: &DVector<f64>,
        weight: f64,
        slope: f64,
        innovation: f64,
        set: &AdmissibleSet,
    ) -> Result<()> {
        if !(slope >= 0.0 && slope.is_finite()) {
            return Err(Error::numerical(format!("gain slope must be finite and non-negative, got {slope}")));
        }
        if !innovation.is_finite() {
            return Err(Error::numerical(format!("non-finite innovation {innovation}")));
        }
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(Error::config(format!("weight {weight} outside (0, 1]")));
        }
        let p_phi = &self.gain * phi;
        let quad = phi.dot(&p_phi);
        let wb2 = slope * weight * weight;
        let a = 1.0 / (self.step_size + wb2 * quad);
        let raw = &self.estimate + &p_phi * (a * weight * innovation);

        let mut next_gain = &self.gain - &p_phi * p_phi.transpose() * (a * wb2);
        next_gain = (&next_gain + next_gain.transpose()) * 0.5;
        let mut next_info = &self.information + phi * phi.transpose() * (wb2 / self.step_size);
        if next_gain.clone().cholesky().is_none() {
            let eig = SymmetricEigen::new(next_gain.clone());
            let trace = next_gain.trace();
            let min = eig.eigenvalues.min();
            if min < -1e-10 * trace {
                return Err(Error::numerical(format!(
                    "gain matrix lost positive definiteness (min eigenvalue {min:e}, trace {trace:e})"
                )));
            }
            let floor = trace.abs() * 1e-15;
            let clipped = eig.eigenvalues.map(|l| l.max(floor));
            next_gain = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
            next_gain = (&next_gain + next_gain.transpose()) * 0.5;
            next_info = next_gain
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .ok_or_else(|| Error::numerical("gain matrix could not be repaired"))?;
        }
        let q = WeightMatrix::new((&next_info + next_info.transpose()) * 0.5)
            .map_err(|e| Error::numerical(format!("information matrix invalid: {e}")))?;
        self.estimate = project(&raw, &q, set)?;
        self.gain = next_gain;
        self.information = q.matrix().clone();
        self.last_gain = a;
        self.last_slope = slope;
        Ok(())
    }
}

/// Functional form of [`StepState::update`].
pub fn step_update(
    state: &StepState,
    phi: &DVector<f64>,
    weight: f64,
    slope: f64,
    innovation: f64,
    set: &AdmissibleSet,
) -> Result<StepState> {
    let mut next = state.clone();
    next.update(phi, weight, slope, innovation, set)?;
    Ok(next)
}

/// Quantities an update rule sees at one time step.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub datum: &'a Datum,
    pub noise: &'a NoiseModel,
    /// `C_k`, a bound on `|phi_k^T x|` over the admissible set.
    pub bound: f64,
    /// `phi_k^T theta_bar_k`.
    pub preliminary_output: f64,
    /// `phi_k^T theta_k`.
    pub accelerated_output: f64,
}

/// Innovation and gain slope of one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub innovation: f64,
    pub slope: f64,
    pub regime: Regime,
}

/// What distinguishes the algorithms sharing the two-step skeleton.
pub trait UpdateRule: Clone + Send + Sync {
    fn name(&self) -> &'static str;
    fn preliminary(&self, inputs: &StepInputs) -> Result<Drive>;
    fn accelerated(&self, inputs: &StepInputs) -> Result<Drive>;
}

/// Weighted least-absolute-deviation rule: sign innovations with CDF corrections.
#[derive(Debug, Clone, Copy, Default)]
pub struct LadRule;

impl UpdateRule for LadRule {
    fn name(&self) -> &'static str {
        "tswlad"
    }

    fn preliminary(&self, s: &StepInputs) -> Result<Drive> {
        let spec = &s.datum.spec;
        let inn = innovation_at(s.datum.observation, s.preliminary_output, spec, s.noise);
        Ok(Drive {
            innovation: inn.value,
            slope: step1_gain_slope(s.noise, s.bound, spec.lower_threshold, spec.upper_threshold),
            regime: inn.regime,
        })
    }

    fn accelerated(&self, s: &StepInputs) -> Result<Drive> {
        let spec = &s.datum.spec;
        let inn = innovation_at(s.datum.observation, s.accelerated_output, spec, s.noise);
        Ok(Drive {
            innovation: inn.value,
            slope: step2_gain_slope_at(s.noise, spec, s.accelerated_output, s.preliminary_output),
            regime: inn.regime,
        })
    }
}

/// How the initial estimates are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialEstimate {
    Centroid,
    Point(DVector<f64>),
}

/// Settings shared by both steps.
#[derive(Debug, Clone)]
pub struct EstimatorSettings {
    pub assumed_noise: NoiseModel,
    pub admissible_set: AdmissibleSet,
    /// `mu_bar`, step 1.
    pub preliminary_step_size: f64,
    /// `mu`, step 2.
    pub accelerated_step_size: f64,
    pub initial_preliminary: InitialEstimate,
    pub initial_accelerated: InitialEstimate,
    /// `P_bar_0 = P_0`.
    pub initial_gain: DMatrix<f64>,
    /// Constant `C` replacing the per-step `sup_{x in D} |phi^T x|`.
    pub bound_override: Option<f64>,
}

impl EstimatorSettings {
    /// Defaults: unit step sizes, centroid start and identity gain.
    pub fn new(assumed_noise: NoiseModel, admissible_set: AdmissibleSet) -> Self {
        let d = admissible_set.dim();
        Self {
            assumed_noise,
            admissible_set,
            preliminary_step_size: 1.0,
            accelerated_step_size: 1.0,
            initial_preliminary: InitialEstimate::Centroid,
            initial_accelerated: InitialEstimate::Centroid,
            initial_gain: DMatrix::identity(d, d),
            bound_override: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.assumed_noise.validate_assumed()?;
        self.admissible_set.validate()?;
        if let Some(c) = self.bound_override {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::config(format!("regressor bound override must be non-negative, got {c}")));
            }
        }
        Ok(())
    }

    fn resolve(&self, init: &InitialEstimate) -> Result<DVector<f64>> {
        match init {
            InitialEstimate::Centroid => Ok(self.admissible_set.centroid()),
            InitialEstimate::Point(p) => self.admissible_set.project_euclidean(p),
        }
    }
}

/// Per-update diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateRecord {
    pub preliminary: Drive,
    pub accelerated: Drive,
    pub bound: f64,
    pub weight: f64,
}

/// Flat state snapshot. Matrices are stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub k: usize,
    pub theta_bar: Vec<f64>,
    pub theta: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub p: Vec<f64>,
    pub mu_bar: f64,
    pub mu: f64,
}

/// Two coupled recursions sharing one data stream.
#[derive(Debug, Clone)]
pub struct TwoStepEstimator<R: UpdateRule> {
    rule: R,
    pub preliminary: StepState,
    pub accelerated: StepState,
    noise: NoiseModel,
    set: AdmissibleSet,
    bound_override: Option<f64>,
    k: usize,
}

/// The weighted least-absolute-deviation estimator.
pub type Tswlad = TwoStepEstimator<LadRule>;

impl<R: UpdateRule> TwoStepEstimator<R> {
    pub fn new(rule: R, settings: &EstimatorSettings) -> Result<Self> {
        settings.validate()?;
        let d = settings.admissible_set.dim();
        if settings.initial_gain.nrows() != d {
            return Err(Error::config(format!(
                "initial gain matrix dimension {} does not match parameter dimension {d}",
                settings.initial_gain.nrows()
            )));
        }
        let preliminary = StepState::new(
            settings.resolve(&settings.initial_preliminary)?,
            settings.initial_gain.clone(),
            settings.preliminary_step_size,
        )?;
        let accelerated = StepState::new(
            settings.resolve(&settings.initial_accelerated)?,
            settings.initial_gain.clone(),
            settings.accelerated_step_size,
        )?;
        Ok(Self {
            rule,
            preliminary,
            accelerated,
            noise: settings.assumed_noise.clone(),
            set: settings.admissible_set.clone(),
            bound_override: settings.bound_override,
            k: 0,
        })
    }

    pub fn name(&self) -> &'static str {
        self.rule.name()
    }

    pub fn time(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.set.dim()
    }

    /// `theta_k`, the step-2 estimate.
    pub fn estimate(&self) -> &DVector<f64> {
        &self.accelerated.estimate
    }

    /// `theta_bar_k`, the step-1 estimate.
    pub fn preliminary_estimate(&self) -> &DVector<f64> {
        &self.preliminary.estimate
    }

    pub fn admissible_set(&self) -> &AdmissibleSet {
        &self.set
    }

    pub fn assumed_noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Adaptive predictor `S_k(phi^T theta_k)`.
    pub fn predict(&self, phi: &DVector<f64>, spec: &SaturationSpec) -> f64 {
        spec.saturate(phi.dot(&self.accelerated.estimate))
    }

    /// Consumes one datum with weight `b_k`. Both steps read the estimates as
    /// they were before this call.
    pub fn update(&mut self, datum: &Datum, weight: f64) -> Result<UpdateRecord> {
        let phi = &datum.regressor;
        if phi.len() != self.dim() {
            return Err(Error::data(format!(
                "datum has dimension {}, estimator has dimension {}",
                phi.len(),
                self.dim()
            )));
        }
        let bound = match self.bound_override {
            Some(c) => c,
            None => self.set.support_abs(phi)?,
        };
        let inputs = StepInputs {
            datum,
            noise: &self.noise,
            bound,
            preliminary_output: phi.dot(&self.preliminary.estimate),
            accelerated_output: phi.dot(&self.accelerated.estimate),
        };
        let pre = self.rule.preliminary(&inputs)?;
        let acc = self.rule.accelerated(&inputs)?;
        let k = self.k;
        self.preliminary
            .update(phi, weight, pre.slope, pre.innovation, &self.set)
            .map_err(|e| e.context(format!("step 1 at k = {k}")))?;
        self.accelerated
            .update(phi, weight, acc.slope, acc.innovation, &self.set)
            .map_err(|e| e.context(format!("step 2 at k = {k}")))?;
        self.k += 1;
        Ok(UpdateRecord {
            preliminary: pre,
            accelerated: acc,
            bound,
            weight,
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        let row_major = |m: &DMatrix<f64>| m.transpose().iter().copied().collect::<Vec<_>>();
        Snapshot {
            k: self.k,
            theta_bar: self.preliminary.estimate.iter().copied().collect(),
            theta: self.accelerated.estimate.iter().copied().collect(),
            p_bar: row_major(&self.preliminary.gain),
            p: row_major(&self.accelerated.gain),
            mu_bar: self.preliminary.step_size,
            mu: self.accelerated.step_size,
        }
    }
}

impl Tswlad {
    pub fn tswlad(settings: &EstimatorSettings) -> Result<Self> {
        Self::new(LadRule, settings)
    }
}

/// Functional form of one estimator update, using the datum weight (or 1).
pub fn tswlad_update(state: &Tswlad, datum: &Datum) -> Result<Tswlad> {
    let mut next = state.clone();
    next.update(datum, datum.weight.unwrap_or(1.0))?;
    Ok(next)
}

/// Functional form of the predictor.
pub fn predict<R: UpdateRule>(state: &TwoStepEstimator<R>, phi: &DVector<f64>, spec: &SaturationSpec) -> f64 {
    state.predict(phi, spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::std_normal_cdf;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_spec() -> SaturationSpec {
        SaturationSpec::clip(0.0, 25.0).unwrap()
    }

    fn g1() -> NoiseModel {
        NoiseModel::gaussian(1.0).unwrap()
    }

    #[test]
    fn innovation_examples() {
        let spec = table_spec();
        let i = innovation_at(15.0, 12.0, &spec, &g1());
        assert_eq!(i, Innovation { value: 1.0, regime: Regime::Interior });
        let upper = innovation_at(25.0, 24.0, &SaturationSpec::clip(0.0, 25.0).unwrap(), &g1());
        // 24 < u, so this is interior with y above the prediction
        assert_eq!(upper.regime, Regime::Interior);

        let spec_u = SaturationSpec::clip(0.0, 23.5).unwrap();
        let i = innovation_at(23.5, 24.0, &spec_u, &g1());
        assert_eq!(i.regime, Regime::Upper);
        assert_abs_diff_eq!(i.value, std_normal_cdf(-0.5), epsilon = 1e-15);

        // Upper regime, y equal to the clip: sign term vanishes
        let spec_u = SaturationSpec::clip(-10.0, 23.0).unwrap();
        let i = innovation_at(23.0, 24.0, &spec_u, &g1());
        assert_abs_diff_eq!(i.value, std_normal_cdf(-1.0), epsilon = 1e-15);

        // Lower regime: l = 0, phi^T theta = -1 is below, y = 0 -> -(1 - F(1))
        let i = innovation_at(0.0, -1.0, &spec, &g1());
        assert_eq!(i.regime, Regime::Lower);
        assert_abs_diff_eq!(i.value, -(1.0 - std_normal_cdf(1.0)), epsilon = 1e-15);
    }

    #[test]
    fn innovation_examples_with_discontinuous_thresholds() {
        // Upper regime with u = 25 exceeded at x = 26 and y = U: v = 0 + F(25 - 26) = F(-1)
        let spec = SaturationSpec::new(0.0, 0.0, 25.0, 30.0).unwrap();
        let i = innovation_at(30.0, 26.0, &spec, &g1());
        assert_eq!(i.regime, Regime::Upper);
        assert_abs_diff_eq!(i.value, 0.158_655_3, epsilon = 1e-7);
        // Lower regime, y above L: v = 1 - (1 - F(l - x))
        let spec = SaturationSpec::new(-2.0, 0.0, 25.0, 25.0).unwrap();
        let i = innovation_at(3.0, -1.0, &spec, &g1());
        assert_abs_diff_eq!(i.value, std_normal_cdf(1.0), epsilon = 1e-15);
    }

    #[test]
    fn step1_slope_examples() {
        assert_abs_diff_eq!(step1_gain_slope(&g1(), 0.0, 0.0, 25.0), 0.398_942_3, epsilon = 1e-7);
        assert_abs_diff_eq!(step1_gain_slope(&g1(), 1.0, 0.0, 25.0), 0.053_991_0, epsilon = 1e-7);
        let tiny = step1_gain_slope(&g1(), 10.0, 0.0, 25.0);
        assert!((tiny / 5.520_948e-88 - 1.0).abs() < 1e-5, "{tiny:e}");
        // C + l dominates when l is large
        assert_eq!(step1_slope_radius(1.0, 5.0, 25.0), 6.0);
        assert_eq!(step1_slope_radius(1.0, -30.0, -20.0), 21.0);
    }

    #[test]
    fn step2_slope_examples() {
        let spec = table_spec();
        assert_abs_diff_eq!(step2_gain_slope_at(&g1(), &spec, 10.0, 10.0), 0.797_884_6, epsilon = 1e-7);
        assert_abs_diff_eq!(step2_gain_slope_at(&g1(), &spec, 1.0, 2.0), 0.682_689_5, epsilon = 1e-7);
        assert_abs_diff_eq!(
            step2_gain_slope_at(&g1(), &spec, 1.0, 2.0),
            1.0 - 2.0 * std_normal_cdf(-1.0),
            epsilon = 1e-15
        );
        // lower regime: x = -1 saturates to L = 0; x_bar = 0
        let lower = step2_gain_slope_at(&g1(), &spec, -1.0, 0.0);
        assert_abs_diff_eq!(lower, std_normal_cdf(1.0) - std_normal_cdf(0.0), epsilon = 1e-15);
        // d below threshold uses the density limit
        let lim = step2_gain_slope_at(&g1(), &spec, -1.0, -1.0 + 1e-13);
        assert_abs_diff_eq!(lim, g1().pdf(1.0), epsilon = 1e-15);
        let up = step2_gain_slope_at(&g1(), &spec, 26.0, 26.0);
        assert_abs_diff_eq!(up, g1().pdf(-1.0), epsilon = 1e-15);
    }

    #[test]
    fn step2_slope_lower_example_with_positive_threshold() {
        // l = 0.5 threshold above phi^T theta_k = ... use spec with l above x
        let spec = SaturationSpec::new(0.0, 3.0, 25.0, 25.0).unwrap();
        let s = step2_gain_slope_at(&g1(), &spec, 1.0, 2.0);
        assert_abs_diff_eq!(s, std_normal_cdf(2.0) - std_normal_cdf(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.135_905_1, epsilon = 1e-7);
    }

    #[test]
    fn scalar_step_update_example() {
        let set = AdmissibleSet::cube(1, 10.0);
        let s = StepState::new(DVector::from_vec(vec![0.5]), DMatrix::identity(1, 1), 1.0).unwrap();
        let phi = DVector::from_vec(vec![1.0]);
        let n = step_update(&s, &phi, 1.0, 0.1, 0.0, &set).unwrap();
        assert_abs_diff_eq!(n.last_gain, 1.0 / 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(n.gain[(0, 0)], 1.0 - 0.1 / 1.1, epsilon = 1e-15);
        assert_eq!(n.estimate[0], 0.5);
    }

    #[test]
    fn zero_regressor_is_a_no_op() {
        let set = AdmissibleSet::cube(3, 10.0);
        let s = StepState::new(DVector::from_vec(vec![1.0, 2.0, 3.0]), DMatrix::identity(3, 3) * 2.0, 4.0).unwrap();
        let n = step_update(&s, &DVector::zeros(3), 1.0, 0.7, 1.5, &set).unwrap();
        assert_eq!(n.last_gain, 0.25);
        assert_eq!(n.gain, s.gain);
        assert_eq!(n.estimate, s.estimate);
    }

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.5
    }

    #[test]
    fn inverse_recursion_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = AdmissibleSet::cube(6, 10.0);
        for _ in 0..50 {
            let p = random_spd(&mut rng, 6);
            let s = StepState::new(DVector::zeros(6), p.clone(), rng.random_range(0.5..3.0)).unwrap();
            let phi = DVector::from_fn(6, |_, _| rng.random_range(-3.0..3.0));
            let (b, beta) = (rng.random_range(0.1..1.0), rng.random_range(0.0..1.0));
            let n = step_update(&s, &phi, b, beta, rng.random_range(-2.0..2.0), &set).unwrap();
            let direct = n.gain.clone().try_inverse().unwrap();
            let formula = p.try_inverse().unwrap() + &phi * phi.transpose() * (beta * b * b / s.step_size);
            let rel = (&direct - &formula).norm() / formula.norm();
            assert!(rel <= 1e-8, "relative error {rel:e}");
            let rel_tracked = (&n.information - &formula).norm() / formula.norm();
            assert!(rel_tracked <= 1e-10);
        }
    }

    #[test]
    fn smaller_weight_moves_less() {
        let set = AdmissibleSet::cube(2, 100.0);
        let s = StepState::new(DVector::zeros(2), DMatrix::identity(2, 2), 1.0).unwrap();
        let phi = DVector::from_vec(vec![1.0, 2.0]);
        let full = step_update(&s, &phi, 1.0, 0.3, 1.0, &set).unwrap();
        let half = step_update(&s, &phi, 0.5, 0.3, 1.0, &set).unwrap();
        assert!(half.estimate.norm() < full.estimate.norm());
        assert!(half.last_gain * 0.5 <= full.last_gain);
    }

    #[test]
    fn rejects_invalid_inputs() {
        let set = AdmissibleSet::cube(1, 1.0);
        let s = StepState::new(DVector::zeros(1), DMatrix::identity(1, 1), 1.0).unwrap();
        let phi = DVector::from_vec(vec![1.0]);
        assert!(matches!(step_update(&s, &phi, 1.0, -0.1, 0.0, &set), Err(Error::Numerical(_))));
        assert!(matches!(step_update(&s, &phi, 1.0, 0.1, f64::NAN, &set), Err(Error::Numerical(_))));
        assert!(matches!(step_update(&s, &phi, 0.0, 0.1, 0.0, &set), Err(Error::Config(_))));
        assert!(StepState::new(DVector::zeros(2), DMatrix::identity(2, 2) * -1.0, 1.0).is_err());
        assert!(StepState::new(DVector::zeros(2), DMatrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn predictor_saturates_step2_estimate() {
        let mut settings = EstimatorSettings::new(g1(), AdmissibleSet::cube(1, 100.0));
        settings.initial_accelerated = InitialEstimate::Point(DVector::from_vec(vec![30.0]));
        let est = Tswlad::tswlad(&settings).unwrap();
        let spec = table_spec();
        assert_eq!(predict(&est, &DVector::from_vec(vec![1.0]), &spec), 25.0);
        assert_eq!(est.predict(&DVector::from_vec(vec![0.4]), &spec), 12.0);
    }

    #[test]
    fn initial_point_outside_set_is_projected() {
        let mut settings = EstimatorSettings::new(g1(), AdmissibleSet::cube(2, 1.0));
        settings.initial_preliminary = InitialEstimate::Point(DVector::from_vec(vec![3.0, -0.5]));
        let est = Tswlad::tswlad(&settings).unwrap();
        assert_eq!(est.preliminary_estimate(), &DVector::from_vec(vec![1.0, -0.5]));
        assert_eq!(est.estimate(), &DVector::zeros(2));
    }

    #[test]
    fn update_advances_time_and_keeps_estimates_in_set() {
        let settings = EstimatorSettings::new(g1(), AdmissibleSet::cube(2, 1.0));
        let mut est = Tswlad::tswlad(&settings).unwrap();
        let datum = Datum {
            regressor: DVector::from_vec(vec![3.0, -1.0]),
            observation: 25.0,
            spec: table_spec(),
            weight: None,
        };
        for k in 0..20 {
            assert_eq!(est.time(), k);
            est = tswlad_update(&est, &datum).unwrap();
            assert!(est.admissible_set().contains(est.estimate()));
            assert!(est.admissible_set().contains(est.preliminary_estimate()));
        }
        let snap = est.snapshot();
        assert_eq!(snap.k, 20);
        assert_eq!(snap.p.len(), 4);
        assert_eq!(snap.p[1], est.accelerated.gain[(0, 1)]);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let settings = EstimatorSettings::new(g1(), AdmissibleSet::cube(2, 1.0));
        let mut est = Tswlad::tswlad(&settings).unwrap();
        let datum = Datum {
            regressor: DVector::from_vec(vec![1.0]),
            observation: 1.0,
            spec: table_spec(),
            weight: None,
        };
        assert!(est.update(&datum, 1.0).is_err());
    }
}
