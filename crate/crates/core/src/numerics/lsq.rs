//! Bounded Levenberg-Marquardt least squares with a central-difference
//! Jacobian.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("lower bound above upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn project(&self, p: &mut [f64]) {
        for ((x, l), u) in p.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*l, *u);
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative cost change regarded as converged.
    pub ftol: f64,
    /// Projected-gradient infinity norm regarded as converged.
    pub gtol: f64,
    /// Treat residual weights as absolute 1/σ; otherwise the covariance is
    /// rescaled by the reduced χ².
    pub absolute_sigma: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, ftol: 1e-12, gtol: 1e-10, absolute_sigma: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitReport {
    pub params: Vec<f64>,
    /// Square roots of the covariance diagonal.
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// `‖r‖₂` of the weighted residuals at the optimum.
    pub residual_norm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

/// Central-difference Jacobian with step `1e-6·max(|p_j|, 1)`. Near a bound
/// the stencil falls back to a one-sided difference that stays feasible.
pub fn numerical_jacobian<F>(resid: &F, p: &[f64], bounds: &Bounds) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let m = resid(p).len();
    let n = p.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut pp = p.to_vec();
    for j in 0..n {
        let h = 1e-6 * p[j].abs().max(1.0);
        let hi = (p[j] + h).min(bounds.upper[j]);
        let lo = (p[j] - h).max(bounds.lower[j]);
        if hi - lo <= 0.0 {
            continue;
        }
        pp[j] = hi;
        let rp = resid(&pp);
        pp[j] = lo;
        let rm = resid(&pp);
        pp[j] = p[j];
        if rp.len() != m || rm.len() != m {
            return Err(Error::FitFailure("residual length changed between evaluations".into()));
        }
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (hi - lo);
        }
    }
    Ok(jac)
}

fn damped_solve(a: &DMatrix<f64>, g: &DVector<f64>, lambda: f64) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut m = a.clone();
    let dmax = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..n {
        m[(i, i)] += lambda * a[(i, i)].max(1e-12 * dmax);
    }
    m.cholesky().map(|c| c.solve(&(-g)))
}

fn projected_gradient_norm(g: &DVector<f64>, p: &[f64], b: &Bounds) -> f64 {
    let mut nrm: f64 = 0.0;
    for j in 0..p.len() {
        let at_lo = p[j] <= b.lower[j] && g[j] > 0.0;
        let at_hi = p[j] >= b.upper[j] && g[j] < 0.0;
        if !(at_lo || at_hi) {
            nrm = nrm.max(g[j].abs());
        }
    }
    nrm
}

fn covariance(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if let Some(ch) = a.clone().cholesky() {
        return ch.inverse();
    }
    log::warn!("normal matrix singular at optimum; using pseudo-inverse for covariance");
    a.clone()
        .pseudo_inverse(1e-14 * a.norm())
        .unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
}

/// Minimizes `½‖resid(p)‖²` subject to `bounds`. The residuals are expected
/// to be already divided by their standard deviations.
pub fn least_squares<F>(resid: F, p0: &[f64], bounds: Option<&Bounds>, opts: &FitOptions) -> Result<FitReport>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    let owned;
    let bounds = match bounds {
        Some(b) => {
            if b.lower.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.lower.len() });
            }
            b
        }
        None => {
            owned = Bounds::unbounded(n);
            &owned
        }
    };
    let mut p = p0.to_vec();
    bounds.project(&mut p);
    let mut r = resid(&p);
    let m = r.len();
    if m < n {
        return Err(Error::FitFailure(format!("{m} residuals for {n} parameters")));
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(Error::FitFailure("non-finite residual at the initial point".into()));
    }
    let mut cost = cost_of(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        if cost == 0.0 {
            converged = true;
            break;
        }
        let jac = numerical_jacobian(&resid, &p, bounds)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_vec(r.clone());
        if projected_gradient_norm(&g, &p, bounds) < opts.gtol {
            converged = true;
            break;
        }
        loop {
            let Some(delta) = damped_solve(&a, &g, lambda) else {
                lambda *= 10.0;
                if lambda > 1e20 {
                    return Err(Error::FitFailure("singular normal equations".into()));
                }
                continue;
            };
            let mut trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(x, d)| x + d).collect();
            bounds.project(&mut trial);
            let step: f64 = trial.iter().zip(&p).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale: f64 = p.iter().map(|x| x.abs()).fold(0.0, f64::max);
            if step <= 1e-15 * (scale + 1e-300) {
                converged = true;
                break 'outer;
            }
            let rt = resid(&trial);
            let ct = cost_of(&rt);
            if ct.is_finite() && ct < cost {
                let rel = (cost - ct) / cost;
                p = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-12);
                if rel < opts.ftol {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // no downhill step at any damping: we are at a (possibly constrained) minimum
                converged = true;
                break 'outer;
            }
        }
    }

    let jac = numerical_jacobian(&resid, &p, bounds)?;
    let a = jac.transpose() * &jac;
    let mut cov = covariance(&a);
    let dof = m - n;
    let chi2 = 2.0 * cost;
    if !opts.absolute_sigma && dof > 0 {
        cov *= chi2 / dof as f64;
    }
    let cov = 0.5 * (&cov + cov.transpose());
    let errors = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let covariance = (0..n).map(|i| (0..n).map(|j| cov[(i, j)]).collect()).collect();
    Ok(FitReport {
        params: p,
        errors,
        covariance,
        residual_norm: chi2.sqrt(),
        chi2,
        dof,
        iterations,
        converged,
    })
}

/// Fits `y ≈ model(x, p)` with optional per-point standard deviations.
pub fn curve_fit<M>(
    model: M,
    xs: &[f64],
    ys: &[f64],
    sigma: Option<&[f64]>,
    p0: &[f64],
    bounds: Option<&Bounds>,
    opts: &FitOptions,
) -> Result<FitReport>
where
    M: Fn(f64, &[f64]) -> f64,
{
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if let Some(s) = sigma {
        if s.len() != xs.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: s.len() });
        }
        if s.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
    }
    let resid = |p: &[f64]| {
        xs.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (&x, &y))| {
                let w = sigma.map_or(1.0, |s| 1.0 / s[i]);
                (model(x, p) - y) * w
            })
            .collect::<Vec<f64>>()
    };
    least_squares(resid, p0, bounds, opts)
}
