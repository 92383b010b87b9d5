//! Projection onto the admissible parameter set under a weighted norm
//! `||x||_Q = sqrt(x^T Q x)`.
//!
//! Boxes are handled by a primal active-set method (closed-form clamp when `Q`
//! is diagonal). Balls reduce to a scalar root-find on the Lagrange multiplier
//! in the eigenbasis of `Q`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KKT_TOL: f64 = 1e-10;

/// Known convex compact set containing the true parameter in its interior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdmissibleSet {
    Box { center: Vec<f64>, radii: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl AdmissibleSet {
    /// Axis-aligned box `{x : |x_i - c_i| <= r_i}`.
    pub fn cube(dim: usize, half_width: f64) -> Self {
        AdmissibleSet::Box {
            center: vec![0.0; dim],
            radii: vec![half_width; dim],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AdmissibleSet::Box { center, .. } | AdmissibleSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AdmissibleSet::Box { center, radii } => {
                if center.is_empty() || center.len() != radii.len() {
                    return Err(Error::config(format!(
                        "box center has {} entries but radii has {}",
                        center.len(),
                        radii.len()
                    )));
                }
                if center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("box center must be finite"));
                }
                if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return Err(Error::config(
                        "admissible-set assumption violated: box radii must be positive and finite",
                    ));
                }
            }
            AdmissibleSet::Ball { center, radius } => {
                if center.is_empty() || center.iter().any(|c| !c.is_finite()) {
                    return Err(Error::config("ball center must be non-empty and finite"));
                }
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(Error::config(
                        "admissible-set assumption violated: ball radius must be positive and finite",
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::config(format!(
                "vector has dimension {n}, admissible set has dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn centroid(&self) -> DVector<f64> {
        match self {
            AdmissibleSet::Box { center, .. } | AdmissibleSet::Ball { center, .. } => {
                DVector::from_column_slice(center)
            }
        }
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        match self {
            AdmissibleSet::Box { center, radii } => x
                .iter()
                .zip(center.iter().zip(radii))
                .all(|(xi, (c, r))| (xi - c).abs() <= *r),
            AdmissibleSet::Ball { center, radius } => {
                (x - DVector::from_column_slice(center)).norm() <= *radius
            }
        }
    }

    /// Strict interior membership.
    pub fn contains_interior(&self, x: &DVector<f64>) -> bool {
        match self {
            AdmissibleSet::Box { center, radii } => x
                .iter()
                .zip(center.iter().zip(radii))
                .all(|(xi, (c, r))| (xi - c).abs() < *r),
            AdmissibleSet::Ball { center, radius } => {
                (x - DVector::from_column_slice(center)).norm() < *radius
            }
        }
    }

    /// `sup_{x in D} |phi^T x|`.
    pub fn support_abs(&self, phi: &DVector<f64>) -> Result<f64> {
        self.check_dim(phi.len())?;
        Ok(match self {
            AdmissibleSet::Box { center, radii } => {
                let c = DVector::from_column_slice(center);
                phi.dot(&c).abs() + phi.iter().zip(radii).map(|(p, r)| p.abs() * r).sum::<f64>()
            }
            AdmissibleSet::Ball { center, radius } => {
                phi.dot(&DVector::from_column_slice(center)).abs() + radius * phi.norm()
            }
        })
    }

    /// Euclidean projection (`Q = I`).
    pub fn project_euclidean(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        Ok(match self {
            AdmissibleSet::Box { center, radii } => DVector::from_iterator(
                x.len(),
                x.iter()
                    .zip(center.iter().zip(radii))
                    .map(|(xi, (c, r))| xi.clamp(c - r, c + r)),
            ),
            AdmissibleSet::Ball { center, radius } => {
                let c = DVector::from_column_slice(center);
                let off = x - &c;
                let n = off.norm();
                if n <= *radius {
                    x.clone()
                } else {
                    c + off * (*radius / n)
                }
            }
        })
    }
}

/// Symmetric positive definite weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(DMatrix<f64>);

impl WeightMatrix {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::config(format!(
                "weight matrix must be square and non-empty, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("weight matrix must be finite"));
        }
        let scale = q.amax();
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(Error::config(format!(
                "weight matrix is not symmetric (max asymmetry {asym:e})"
            )));
        }
        let sym = (&q + q.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::config("weight matrix is not positive definite"));
        }
        Ok(WeightMatrix(sym))
    }

    pub fn identity(dim: usize) -> Self {
        WeightMatrix(DMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn is_diagonal(&self) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.0[(i, j)] == 0.0))
    }
}

/// `sqrt(x^T Q x)`.
pub fn weighted_norm(x: &DVector<f64>, q: &WeightMatrix) -> Result<f64> {
    if x.len() != q.dim() {
        return Err(Error::config(format!(
            "vector has dimension {}, weight matrix is {}x{}",
            x.len(),
            q.dim(),
            q.dim()
        )));
    }
    Ok(x.dot(&(q.matrix() * x)).max(0.0).sqrt())
}

/// Projection result with its optimality certificate.
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    /// Largest violation of the first-order optimality conditions.
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// `argmin_{y in D} ||x - y||_Q`.
pub fn project(x: &DVector<f64>, q: &WeightMatrix, set: &AdmissibleSet) -> Result<DVector<f64>> {
    project_certified(x, q, set).map(|p| p.point)
}

pub fn project_certified(x: &DVector<f64>, q: &WeightMatrix, set: &AdmissibleSet) -> Result<Projection> {
    set.check_dim(x.len())?;
    if q.dim() != x.len() {
        return Err(Error::config(format!(
            "weight matrix is {}x{}, vector has dimension {}",
            q.dim(),
            q.dim(),
            x.len()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("cannot project a non-finite point"));
    }
    if set.contains(x) {
        return Ok(Projection {
            point: x.clone(),
            kkt_residual: 0.0,
            iterations: 0,
        });
    }
    match set {
        AdmissibleSet::Box { center, radii } => {
            let lo = DVector::from_iterator(x.len(), center.iter().zip(radii).map(|(c, r)| c - r));
            let hi = DVector::from_iterator(x.len(), center.iter().zip(radii).map(|(c, r)| c + r));
            if q.is_diagonal() {
                let point = DVector::from_iterator(
                    x.len(),
                    x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.clamp(*l, *h)),
                );
                return Ok(Projection {
                    point,
                    kkt_residual: 0.0,
                    iterations: 0,
                });
            }
            box_active_set(x, q.matrix(), &lo, &hi)
        }
        AdmissibleSet::Ball { center, radius } => {
            ball_multiplier(x, q.matrix(), &DVector::from_column_slice(center), *radius)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

fn box_kkt_residual(g: &DVector<f64>, status: &[Bound]) -> f64 {
    g.iter()
        .zip(status)
        .map(|(gi, s)| match s {
            Bound::Free => gi.abs(),
            Bound::Lower => (-gi).max(0.0),
            Bound::Upper => gi.max(0.0),
        })
        .fold(0.0, f64::max)
}

fn box_active_set(
    x: &DVector<f64>,
    q: &DMatrix<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> Result<Projection> {
    let d = x.len();
    let max_iter = 50 + 10 * d;
    let mut y = DVector::from_iterator(d, x.iter().zip(lo.iter().zip(hi.iter())).map(|(v, (l, h))| v.clamp(*l, *h)));
    let mut status: Vec<Bound> = (0..d)
        .map(|i| {
            if y[i] == lo[i] {
                Bound::Lower
            } else if y[i] == hi[i] {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    // Multipliers are compared against a tolerance scaled to the gradient size.
    let scale = q.amax() * (x - &y).amax().max(1.0);
    let mult_tol = 1e-13 * scale;
    let mut trace = Vec::new();

    for iter in 0..max_iter {
        let free: Vec<usize> = (0..d).filter(|&i| status[i] == Bound::Free).collect();
        if !free.is_empty() {
            let fixed: Vec<usize> = (0..d).filter(|&i| status[i] != Bound::Free).collect();
            let qff = q.select_rows(&free).select_columns(&free);
            let mut rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| x[i]));
            if !fixed.is_empty() {
                let qfw = q.select_rows(&free).select_columns(&fixed);
                let dw = DVector::from_iterator(fixed.len(), fixed.iter().map(|&i| y[i] - x[i]));
                let chol = qff
                    .clone()
                    .cholesky()
                    .ok_or_else(|| Error::numerical("projection subproblem lost positive definiteness"))?;
                rhs -= chol.solve(&(qfw * dw));
            }
            let z = rhs;
            // Step towards the subspace minimizer until a bound blocks.
            let mut alpha = 1.0;
            let mut blocking = None;
            for (j, &i) in free.iter().enumerate() {
                let p = z[j] - y[i];
                let limit = if p < 0.0 {
                    (lo[i] - y[i]) / p
                } else if p > 0.0 {
                    (hi[i] - y[i]) / p
                } else {
                    f64::INFINITY
                };
                if limit < alpha {
                    alpha = limit;
                    blocking = Some((i, if p < 0.0 { Bound::Lower } else { Bound::Upper }));
                }
            }
            for (j, &i) in free.iter().enumerate() {
                y[i] += alpha * (z[j] - y[i]);
            }
            if let Some((i, b)) = blocking {
                y[i] = if b == Bound::Lower { lo[i] } else { hi[i] };
                status[i] = b;
                trace.push(format!("iter {iter}: blocked at coordinate {i} ({b:?})"));
                continue;
            }
        }
        let g = q * (&y - x);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..d {
            let violation = match status[i] {
                Bound::Free => 0.0,
                Bound::Lower => -g[i],
                Bound::Upper => g[i],
            };
            if violation > mult_tol && worst.is_none_or(|(_, w)| violation > w) {
                worst = Some((i, violation));
            }
        }
        match worst {
            None => {
                for i in 0..d {
                    y[i] = y[i].clamp(lo[i], hi[i]);
                }
                let g = q * (&y - x);
                return Ok(Projection {
                    kkt_residual: box_kkt_residual(&g, &status),
                    point: y,
                    iterations: iter + 1,
                });
            }
            Some((i, v)) => {
                trace.push(format!("iter {iter}: released coordinate {i} (multiplier violation {v:e})"));
                status[i] = Bound::Free;
            }
        }
    }
    Err(Error::numerical(format!(
        "box projection did not converge in {max_iter} iterations; trace: [{}]",
        trace.join("; ")
    )))
}

fn ball_multiplier(
    x: &DVector<f64>,
    q: &DMatrix<f64>,
    center: &DVector<f64>,
    radius: f64,
) -> Result<Projection> {
    let eig = SymmetricEigen::new(q.clone());
    let lam = &eig.eigenvalues;
    let w = eig.eigenvectors.transpose() * (x - center);
    let norm_at = |nu: f64| -> f64 {
        lam.iter()
            .zip(w.iter())
            .map(|(l, wi)| (l * wi / (l + nu)).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let lmax = lam.max();
    let mut lo = 0.0;
    let mut hi = lmax * w.norm() / radius;
    let mut iterations = 0;
    while norm_at(hi) > radius {
        hi *= 2.0;
        iterations += 1;
        if !hi.is_finite() || iterations > 200 {
            return Err(Error::numerical("ball projection: could not bracket the multiplier"));
        }
    }
    for _ in 0..200 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > radius {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    let zeig = DVector::from_iterator(w.len(), lam.iter().zip(w.iter()).map(|(l, wi)| l * wi / (l + nu)));
    let mut z = &eig.eigenvectors * zeig;
    let n = z.norm();
    if n > 0.0 {
        z *= radius / n;
    }
    let point = center + &z;
    let residual = (q * (&point - x) + &z * nu).amax();
    Ok(Projection {
        point,
        kkt_residual: residual,
        iterations,
    })
}

/// Reports whether the certificate meets the default tolerance.
pub fn certificate_ok(p: &Projection) -> bool {
    p.kkt_residual <= KKT_TOL
}
