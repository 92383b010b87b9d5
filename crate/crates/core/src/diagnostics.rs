//! Excitation tracking, convergence-rate and regret metrics, and closed-form
//! conditional means of the sign innovation used as test oracles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{NoiseModel, Regime, SaturationSpec};

/// Default number of accumulated regressors between eigen-decompositions.
pub const DEFAULT_EIGEN_EVERY: usize = 10;

/// Running `P_0^{-1} + sum phi_i phi_i^T` with cached extreme eigenvalues.
#[derive(Debug, Clone)]
pub struct InformationTracker {
    matrix: DMatrix<f64>,
    lambda_min: f64,
    lambda_max: f64,
    count: usize,
    refresh_every: usize,
}

impl InformationTracker {
    pub fn new(initial_gain: &DMatrix<f64>) -> Result<Self> {
        let matrix = initial_gain
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::config("initial gain matrix must be positive definite"))?;
        let mut t = Self {
            matrix,
            lambda_min: 0.0,
            lambda_max: 0.0,
            count: 0,
            refresh_every: DEFAULT_EIGEN_EVERY,
        };
        t.refresh();
        Ok(t)
    }

    pub fn with_refresh_every(mut self, n: usize) -> Self {
        self.refresh_every = n.max(1);
        self
    }

    /// Adds `phi phi^T`; eigenvalues are recomputed every `refresh_every` calls.
    pub fn update(&mut self, phi: &DVector<f64>) {
        self.matrix += phi * phi.transpose();
        self.count += 1;
        if self.count.is_multiple_of(self.refresh_every) {
            self.refresh();
        }
    }

    /// Recomputes the extreme eigenvalues exactly.
    pub fn refresh(&mut self) {
        let eig = SymmetricEigen::new(self.matrix.clone());
        self.lambda_min = eig.eigenvalues.min();
        self.lambda_max = eig.eigenvalues.max();
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Cached `(lambda_min, lambda_max)`.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        (self.lambda_min, self.lambda_max)
    }
}

/// Functional form of [`InformationTracker::update`] followed by an exact refresh.
pub fn update_tracker(tracker: &InformationTracker, phi: &DVector<f64>) -> InformationTracker {
    let mut t = tracker.clone();
    t.update(phi);
    t.refresh();
    t
}

/// Rate diagnostics at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateDiagnostics {
    /// `err^2 * lambda_min / log(lambda_max + e)`.
    pub ratio: f64,
    /// `log(lambda_max) / lambda_min`; tends to 0 under the weak excitation condition.
    pub excitation: f64,
}

pub fn rate_ratio(tracker: &InformationTracker, err: f64) -> RateDiagnostics {
    let (lmin, lmax) = tracker.eigen_bounds();
    rate_ratio_from(lmin, lmax, err)
}

pub fn rate_ratio_from(lambda_min: f64, lambda_max: f64, err: f64) -> RateDiagnostics {
    RateDiagnostics {
        ratio: err * err * lambda_min / (lambda_max + std::f64::consts::E).ln(),
        excitation: lambda_max.ln() / lambda_min,
    }
}

/// `err * k / log log k`, a trend diagnostic for the strongly excited case.
/// Undefined (NaN) for `k <= e`.
pub fn loglog_trend(err: f64, k: usize) -> f64 {
    let k = k as f64;
    let ll = k.ln().ln();
    if ll > 0.0 {
        err * k / ll
    } else {
        f64::NAN
    }
}

/// `b |y* - y_hat|`.
pub fn regret_step(best: f64, predicted: f64, weight: f64) -> f64 {
    weight * (best - predicted).abs()
}

/// `(1/n) sum b_k |y_{k+1} - y_hat_{k+1}|` over `(b, y, y_hat)` triples.
pub fn avg_prediction_error<I>(series: I) -> Result<f64>
where
    I: IntoIterator<Item = (f64, f64, f64)>,
{
    let (mut n, mut sum) = (0usize, 0.0);
    for (b, y, yh) in series {
        n += 1;
        sum += b * (y - yh).abs();
    }
    if n == 0 {
        return Err(Error::data("average prediction error needs at least one step"));
    }
    Ok(sum / n as f64)
}

/// `1 - (1/T) sum |y - y_hat| / y`. Requires every `y > 0`.
pub fn sentencing_accuracy<I>(pairs: I) -> Result<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut n, mut sum) = (0usize, 0.0);
    for (y, yh) in pairs {
        if y.is_nan() || y <= 0.0 {
            return Err(Error::data(format!("relative accuracy needs positive observations, got {y}")));
        }
        n += 1;
        sum += (y - yh).abs() / y;
    }
    if n == 0 {
        return Err(Error::data("relative accuracy needs at least one pair"));
    }
    Ok(1.0 - sum / n as f64)
}

/// `e^T Q e` with `e = theta - estimate`.
pub fn lyapunov(error: &DVector<f64>, information: &DMatrix<f64>) -> f64 {
    error.dot(&(information * error))
}

/// Inputs of the conditional-mean closed form, evaluated at a known truth.
#[derive(Debug, Clone)]
pub struct PsiOracle {
    pub regressor: DVector<f64>,
    pub estimate: DVector<f64>,
    pub theta: DVector<f64>,
    pub spec: SaturationSpec,
    pub noise: NoiseModel,
}

impl PsiOracle {
    /// Conditional mean of the innovation given the past.
    pub fn value(&self) -> f64 {
        psi_at(
            self.regressor.dot(&self.estimate),
            self.regressor.dot(&self.theta),
            &self.spec,
            &self.noise,
        )
    }
}

pub fn psi_value(o: &PsiOracle) -> f64 {
    o.value()
}

/// Closed form keyed on the regime of `S(x_hat)`, with `x_hat = phi^T theta_hat`
/// and `x = phi^T theta`.
pub fn psi_at(x_hat: f64, x: f64, spec: &SaturationSpec, noise: &NoiseModel) -> f64 {
    match spec.classify(x_hat) {
        Regime::Lower => noise.cdf(spec.lower_threshold - x_hat) - noise.cdf(spec.lower_threshold - x),
        Regime::Interior => 1.0 - 2.0 * noise.cdf(x_hat - x),
        Regime::Upper => noise.cdf(spec.upper_threshold - x_hat) - noise.cdf(spec.upper_threshold - x),
    }
}

/// One checkpoint row of a metric series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub k: usize,
    pub param_err: f64,
    pub param_err_bar: f64,
    pub regret_avg: f64,
    pub pred_err_avg: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub rate_ratio: f64,
    pub lyapunov: f64,
}

pub type MetricSeries = Vec<MetricRow>;

/// Accumulates per-step quantities and emits [`MetricRow`]s at checkpoints.
/// Metrics that need the true parameter are NaN when it is unknown.
#[derive(Debug, Clone)]
pub struct MetricsRecorder {
    theta: Option<DVector<f64>>,
    tracker: InformationTracker,
    regret_sum: f64,
    pred_err_sum: f64,
    steps: usize,
    rows: MetricSeries,
}

impl MetricsRecorder {
    pub fn new(theta: Option<DVector<f64>>, initial_gain: &DMatrix<f64>, eigen_every: usize) -> Result<Self> {
        Ok(Self {
            theta,
            tracker: InformationTracker::new(initial_gain)?.with_refresh_every(eigen_every),
            regret_sum: 0.0,
            pred_err_sum: 0.0,
            steps: 0,
            rows: Vec::new(),
        })
    }

    /// Records step `k` before the estimator consumes its datum.
    pub fn record(
        &mut self,
        phi: &DVector<f64>,
        spec: &SaturationSpec,
        weight: f64,
        observation: f64,
        prediction: f64,
    ) {
        self.tracker.update(phi);
        if let Some(theta) = &self.theta {
            self.regret_sum += regret_step(spec.saturate(phi.dot(theta)), prediction, weight);
        } else {
            self.regret_sum = f64::NAN;
        }
        self.pred_err_sum += weight * (observation - prediction).abs();
        self.steps += 1;
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn tracker(&self) -> &InformationTracker {
        &self.tracker
    }

    /// Appends a row for the current time with exact eigenvalues.
    pub fn checkpoint(&mut self, estimate: &DVector<f64>, preliminary: &DVector<f64>, information: &DMatrix<f64>) -> MetricRow {
        self.tracker.refresh();
        let (lmin, lmax) = self.tracker.eigen_bounds();
        let n = self.steps.max(1) as f64;
        let (err, err_bar, lyap) = match &self.theta {
            Some(theta) => {
                let e = theta - estimate;
                (e.norm(), (theta - preliminary).norm(), lyapunov(&e, information))
            }
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        let row = MetricRow {
            k: self.steps,
            param_err: err,
            param_err_bar: err_bar,
            regret_avg: self.regret_sum / n,
            pred_err_avg: self.pred_err_sum / n,
            lambda_min: lmin,
            lambda_max: lmax,
            rate_ratio: rate_ratio_from(lmin, lmax, err).ratio,
            lyapunov: lyap,
        };
        self.rows.push(row);
        row
    }

    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    pub fn into_rows(self) -> MetricSeries {
        self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::std_normal_cdf;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Cyclic Jacobi eigenvalue iteration, independent of nalgebra's solver.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _ in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
            if off < 1e-30 * a.norm_squared() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let (akp, akq) = (a[(k, p)], a[(k, q)]);
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        let mut ev: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
        ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
        ev
    }

    #[test]
    fn tracker_examples() {
        let t = InformationTracker::new(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(t.eigen_bounds(), (1.0, 1.0));
        let mut e1 = DVector::zeros(3);
        e1[0] = 1.0;
        let t = update_tracker(&t, &e1);
        let (lmin, lmax) = t.eigen_bounds();
        assert_abs_diff_eq!(lmax, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lmin, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn tracker_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut t = InformationTracker::new(&DMatrix::identity(6, 6)).unwrap();
        let mut prev = t.eigen_bounds();
        for _ in 0..100 {
            let phi = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            t = update_tracker(&t, &phi);
            let now = t.eigen_bounds();
            assert!(now.0 >= prev.0 - 1e-12 && now.1 >= prev.1 - 1e-12);
            prev = now;
        }
        let ev = jacobi_eigenvalues(t.matrix().clone());
        let (lmin, lmax) = t.eigen_bounds();
        assert!((lmin - ev[0]).abs() <= 1e-8 * ev[5]);
        assert!((lmax - ev[5]).abs() <= 1e-8 * ev[5]);
    }

    #[test]
    fn lazy_refresh_cadence() {
        let mut t = InformationTracker::new(&DMatrix::identity(2, 2)).unwrap().with_refresh_every(3);
        let phi = DVector::from_vec(vec![1.0, 0.0]);
        t.update(&phi);
        t.update(&phi);
        assert_eq!(t.eigen_bounds().1, 1.0);
        t.update(&phi);
        assert_abs_diff_eq!(t.eigen_bounds().1, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn rate_ratio_examples() {
        let t = InformationTracker::new(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(rate_ratio(&t, 0.0).ratio, 0.0);
        let e = std::f64::consts::E;
        let r = rate_ratio_from(1.0, e, 1.0);
        assert_abs_diff_eq!(r.ratio, 1.0 / (2.0 * e).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(r.excitation, 1.0, epsilon = 1e-15);
        assert!(loglog_trend(1.0, 2).is_nan());
        assert!(loglog_trend(0.5, 1000) > 0.0);
    }

    #[test]
    fn regret_and_error_examples() {
        assert_eq!(regret_step(10.0, 12.0, 1.0), 2.0);
        assert_eq!(regret_step(7.5, 7.5, 0.3), 0.0);
        assert_eq!(regret_step(10.0, 12.0, 0.5), 1.0);
        assert_eq!(avg_prediction_error(vec![(1.0, 4.0, 4.0); 5]).unwrap(), 0.0);
        assert_eq!(avg_prediction_error([(1.0, 5.0, 2.0)]).unwrap(), 3.0);
        assert!(avg_prediction_error(Vec::new()).is_err());
    }

    #[test]
    fn sentencing_accuracy_examples() {
        assert_eq!(sentencing_accuracy([(3.0, 3.0), (8.0, 8.0)]).unwrap(), 1.0);
        assert_abs_diff_eq!(sentencing_accuracy([(10.0, 9.0)]).unwrap(), 0.9, epsilon = 1e-15);
        assert_abs_diff_eq!(sentencing_accuracy([(10.0, 9.0), (20.0, 22.0)]).unwrap(), 0.9, epsilon = 1e-15);
        assert!(matches!(sentencing_accuracy([(10.0, 9.0), (0.0, 1.0)]), Err(Error::Data(_))));
    }

    #[test]
    fn psi_examples() {
        let g = NoiseModel::gaussian(1.0).unwrap();
        let spec = SaturationSpec::clip(0.0, 25.0).unwrap();
        for x in [-3.0, 0.0, 12.0, 25.0, 30.0] {
            assert_eq!(psi_at(x, x, &spec, &g), 0.0);
        }
        assert_abs_diff_eq!(psi_at(13.0, 12.0, &spec, &g), 1.0 - 2.0 * std_normal_cdf(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(psi_at(13.0, 12.0, &spec, &g), -0.682_689_5, epsilon = 1e-7);
        let spec_l = SaturationSpec::new(0.0, 3.0, 25.0, 25.0).unwrap();
        let v = psi_at(1.0, 2.0, &spec_l, &g);
        assert_abs_diff_eq!(v, std_normal_cdf(2.0) - std_normal_cdf(1.0), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.135_905_1, epsilon = 1e-7);
        let oracle = PsiOracle {
            regressor: DVector::from_vec(vec![1.0, 1.0]),
            estimate: DVector::from_vec(vec![10.0, 3.0]),
            theta: DVector::from_vec(vec![10.0, 2.0]),
            spec,
            noise: g,
        };
        assert_abs_diff_eq!(psi_value(&oracle), 1.0 - 2.0 * std_normal_cdf(1.0), epsilon = 1e-15);
    }

    #[test]
    fn recorder_rows() {
        let theta = DVector::from_vec(vec![1.0, 2.0]);
        let mut rec = MetricsRecorder::new(Some(theta.clone()), &DMatrix::identity(2, 2), 10).unwrap();
        let spec = SaturationSpec::clip(0.0, 25.0).unwrap();
        let phi = DVector::from_vec(vec![1.0, 1.0]);
        rec.record(&phi, &spec, 1.0, 3.5, 2.0);
        let est = DVector::from_vec(vec![1.0, 1.0]);
        let row = rec.checkpoint(&est, &est, &DMatrix::identity(2, 2));
        assert_eq!(row.k, 1);
        assert_eq!(row.regret_avg, 1.0);
        assert_eq!(row.pred_err_avg, 1.5);
        assert_eq!(row.param_err, 1.0);
        assert_eq!(row.lyapunov, 1.0);
        assert_abs_diff_eq!(row.lambda_max, 3.0, epsilon = 1e-12);
        let mut blind = MetricsRecorder::new(None, &DMatrix::identity(2, 2), 10).unwrap();
        blind.record(&phi, &spec, 1.0, 3.5, 2.0);
        let row = blind.checkpoint(&est, &est, &DMatrix::identity(2, 2));
        assert!(row.param_err.is_nan() && row.regret_avg.is_nan());
        assert_eq!(row.pred_err_avg, 1.5);
    }
}
