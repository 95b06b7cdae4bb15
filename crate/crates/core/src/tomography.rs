//! Phonon-state characterization: Wigner maps, Gaussian variance fits,
//! maximum-likelihood reconstruction from displaced-parity data, and the
//! quantum Fisher information of rotated quadratures.

use std::f64::consts::PI;
use std::io::{BufRead, Write};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::dynamics::{variances_from_moments, Moments, QuadratureStats};
use crate::fock::{displaced_parity, quadrature_p, quadrature_x, DensityMatrix, Dims};
use crate::numerics::{golden_section_min, hermitian_eig, least_squares, Bounds, FitOptions, FitReport};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Upper bound on the step t in ρ → (I + tG)ρ(I + tG), G = R − I. t = 1 is
/// plain RρR; larger steps speed up the slow approach to low-rank states.
const MAX_STEP: f64 = 1e4;
/// Consecutive sub-tolerance likelihood changes required to stop; a single
/// small change also happens right after a rejected step.
const QUIET_ITERATIONS: usize = 10;

/// W(x, p) on a rectangular grid; `values[[i, j]]` is at (xs[i], ps[j]).
#[derive(Clone, Debug, PartialEq)]
pub struct WignerMap {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub values: Array2<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

fn trapezoid_weights(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut w = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let h = 0.5 * (v[k + 1] - v[k]);
        w[k] += h;
        w[k + 1] += h;
    }
    w
}

impl WignerMap {
    pub const BOUND: f64 = 1.0 / PI + 1e-9;

    pub fn new(xs: Vec<f64>, ps: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        if xs.is_empty() || ps.is_empty() || !strictly_increasing(&xs) || !strictly_increasing(&ps) {
            return Err(Error::InvalidParameter("Wigner grids must be nonempty and strictly increasing".into()));
        }
        if values.dim() != (xs.len(), ps.len()) {
            return Err(Error::DimensionMismatch { expected: xs.len() * ps.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !(v.abs() <= Self::BOUND)) {
            return Err(Error::InvalidState(format!("Wigner value {v} violates |W| <= 1/pi")));
        }
        Ok(Self { xs, ps, values })
    }

    /// Trapezoid-rule ∫ f(x, p) W(x, p) dx dp.
    pub fn integrate<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        let wx = trapezoid_weights(&self.xs);
        let wp = trapezoid_weights(&self.ps);
        let mut acc = 0.0;
        for (i, &x) in self.xs.iter().enumerate() {
            for (j, &p) in self.ps.iter().enumerate() {
                acc += wx[i] * wp[j] * f(x, p) * self.values[[i, j]];
            }
        }
        acc
    }

    pub fn normalization(&self) -> f64 {
        self.integrate(|_, _| 1.0)
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// ∫ max(−W, 0) dx dp.
    pub fn negative_volume(&self) -> f64 {
        let neg = self.values.mapv(|v| (-v).max(0.0));
        let m = WignerMap { xs: self.xs.clone(), ps: self.ps.clone(), values: neg };
        m.integrate(|_, _| 1.0)
    }

    /// First row: blank corner then the ps grid; each following row: x then W values.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
        let head: Vec<String> = self.ps.iter().map(|p| p.to_string()).collect();
        writeln!(w, "x\\p,{}", head.join(",")).map_err(io)?;
        for (i, x) in self.xs.iter().enumerate() {
            let row: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{x},{}", row.join(",")).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(format!("Wigner CSV: {m}"));
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("'{}': {e}", s.trim())));
        let mut lines = r.lines().filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()));
        let head = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| bad(e.to_string()))?;
        let ps = head.split(',').skip(1).map(parse).collect::<Result<Vec<_>>>()?;
        let mut xs = Vec::new();
        let mut vals = Vec::new();
        for line in lines {
            let line = line.map_err(|e| bad(e.to_string()))?;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != ps.len() + 1 {
                return Err(bad(format!("row has {} cells, expected {}", cells.len(), ps.len() + 1)));
            }
            xs.push(parse(cells[0])?);
            for c in &cells[1..] {
                vals.push(parse(c)?);
            }
        }
        let values = Array2::from_shape_vec((xs.len(), ps.len()), vals).map_err(|e| bad(e.to_string()))?;
        Self::new(xs, ps, values)
    }
}

fn phonon(rho: &DensityMatrix) -> Result<DensityMatrix> {
    match rho.dims() {
        Dims::Composite(_) => rho.phonon_state(),
        Dims::Single(_) => Ok(rho.clone()),
    }
}

/// Tr(ρ M) for a dense matrix M.
fn trace_prod(rho: &Array2<C64>, m: &Array2<C64>) -> C64 {
    let n = rho.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += rho[[i, j]] * m[[j, i]];
        }
    }
    acc
}

/// W(x, p) = Tr[ρ D(α) Π D(α)†]/π with α = (x + ip)/√2, so that the vacuum
/// is e^{−(x²+p²)}/π. Composite states are reduced to the phonon first.
pub fn wigner(rho: &DensityMatrix, xs: &[f64], ps: &[f64]) -> Result<WignerMap> {
    let ph = phonon(rho)?;
    let dim = ph.size();
    let rmax = xs.iter().flat_map(|x| ps.iter().map(move |p| 0.5 * (x * x + p * p))).fold(0.0, f64::max);
    if rmax > dim as f64 / 4.0 {
        log::warn!("Wigner grid reaches |alpha|^2 = {rmax:.2} > dim/4 = {:.2}; truncation error likely", dim as f64 / 4.0);
    }
    let m = ph.mat();
    let rows: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            ps.iter()
                .map(|&p| {
                    let alpha = C64::new(x, p) / 2f64.sqrt();
                    trace_prod(m, &displaced_parity(alpha, dim)).re / PI
                })
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((xs.len(), ps.len()), |(i, j)| rows[i][j]);
    WignerMap::new(xs.to_vec(), ps.to_vec(), values.mapv(|v| v.clamp(-1.0 / PI, 1.0 / PI)))
}

/// Uniform grid of `n` points on [−extent, extent].
pub fn symmetric_grid(extent: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| -extent + 2.0 * extent * k as f64 / (n - 1) as f64).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub mean: [f64; 2],
    /// Covariance Γ in (x, p).
    pub covariance: [[f64; 2]; 2],
    pub stats: QuadratureStats,
    pub report: FitReport,
}

/// Eigen-decomposition of a symmetric 2×2 covariance into (V_min, V_max,
/// angle of the minor axis in [0, π)).
pub fn covariance_axes(c: [[f64; 2]; 2]) -> (f64, f64, f64) {
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    let mid = 0.5 * (a + d);
    let rad = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let major = 0.5 * (2.0 * b).atan2(a - d);
    let angle = (major + PI / 2.0).rem_euclid(PI);
    (mid - rad, mid + rad, angle)
}

/// Least-squares fit of A·exp(−½(z−μ)ᵀΓ⁻¹(z−μ)) to a Wigner map; Γ is
/// parametrized through its Cholesky factor so it stays positive definite.
pub fn gaussian_fit(map: &WignerMap) -> Result<GaussianFit> {
    if map.values.len() < 25 {
        return Err(Error::InvalidParameter(format!("Gaussian fit needs >= 25 points, got {}", map.values.len())));
    }
    if map.values.iter().all(|&v| v <= 0.0) {
        return Err(Error::FitFailure("Wigner map has no positive values".into()));
    }
    let mut pts = Vec::with_capacity(map.values.len());
    for (i, &x) in map.xs.iter().enumerate() {
        for (j, &p) in map.ps.iter().enumerate() {
            pts.push((x, p, map.values[[i, j]]));
        }
    }
    // initial guess from moments of the positive part
    let (mut s0, mut sx, mut sp) = (0.0, 0.0, 0.0);
    for &(x, p, w) in &pts {
        let w = w.max(0.0);
        s0 += w;
        sx += w * x;
        sp += w * p;
    }
    let (mx, mp) = (sx / s0, sp / s0);
    let (mut cxx, mut cpp, mut cxp) = (0.0, 0.0, 0.0);
    for &(x, p, w) in &pts {
        let w = w.max(0.0);
        cxx += w * (x - mx).powi(2);
        cpp += w * (p - mp).powi(2);
        cxp += w * (x - mx) * (p - mp);
    }
    let (cxx, cpp, cxp) = (cxx / s0, cpp / s0, cxp / s0);
    let l11 = cxx.max(1e-4).sqrt();
    let l21 = cxp / l11;
    let l22 = (cpp - l21 * l21).max(1e-4).sqrt();
    let amp0 = pts.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max);

    let resid = |q: &[f64]| -> Vec<f64> {
        let (a, mx, mp, l11, l21, l22) = (q[0], q[1], q[2], q[3], q[4], q[5]);
        pts.iter()
            .map(|&(x, p, w)| {
                // solve L y = z − μ
                let y1 = (x - mx) / l11;
                let y2 = (p - mp - l21 * y1) / l22;
                a * (-0.5 * (y1 * y1 + y2 * y2)).exp() - w
            })
            .collect()
    };
    let inf = f64::INFINITY;
    let bounds = Bounds::new(vec![0.0, -inf, -inf, 1e-6, -inf, 1e-6], vec![inf; 6])?;
    let report = least_squares(resid, &[amp0, mx, mp, l11, l21, l22], Some(&bounds), &FitOptions::default())?;
    if !report.converged {
        return Err(Error::FitFailure(format!("Gaussian fit did not converge after {} iterations", report.iterations)));
    }
    let q = &report.params;
    let cov = [[q[3] * q[3], q[3] * q[4]], [q[3] * q[4], q[4] * q[4] + q[5] * q[5]]];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    if !(det > 0.0) {
        return Err(Error::FitFailure("fitted covariance is not positive definite".into()));
    }
    let (vmin, vmax, angle) = covariance_axes(cov);
    let stats = QuadratureStats::from_variances(vmin, vmax, angle)?;
    Ok(GaussianFit { amplitude: q[0], mean: [q[1], q[2]], covariance: cov, stats, report })
}

/// V_min, V_max and derived quantities from the phonon moments of ρ.
pub fn covariance_from_rho(rho: &DensityMatrix) -> Result<QuadratureStats> {
    variances_from_moments(&Moments::of(rho)?)
}

/// One displaced-parity setting: displacement α and measured ⟨Π(α)⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct ParityMeasurement {
    pub alpha: C64,
    pub parity: f64,
}

/// Noiseless parity expectations of ρ at the given displacements.
pub fn simulate_parity_data(rho: &DensityMatrix, alphas: &[C64]) -> Result<Vec<ParityMeasurement>> {
    let ph = phonon(rho)?;
    let dim = ph.size();
    Ok(alphas
        .par_iter()
        .map(|&alpha| ParityMeasurement { alpha, parity: trace_prod(ph.mat(), &displaced_parity(alpha, dim)).re.clamp(-1.0, 1.0) })
        .collect())
}

/// Square grid of displacements with Re α, Im α ∈ [−extent, extent].
pub fn alpha_grid(extent: f64, n: usize) -> Vec<C64> {
    let g = symmetric_grid(extent, n);
    g.iter().flat_map(|&re| g.iter().map(move |&im| C64::new(re, im))).collect()
}

#[derive(Clone, Debug)]
pub struct MleOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change that ends the iteration.
    pub tol: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iter: 5000, tol: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TruncationSensitivity {
    pub truncations: Vec<usize>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// Half the spread of V_min over the truncations.
    pub v_min_err: f64,
    pub v_max_err: f64,
}

fn serialize_rho<S: Serializer>(rho: &DensityMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<C64>> = rho.mat().rows().into_iter().map(|r| r.to_vec()).collect();
    rows.serialize(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct ReconstructionResult {
    #[serde(serialize_with = "serialize_rho")]
    pub rho: DensityMatrix,
    pub truncation: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub truncation_sensitivity: Option<TruncationSensitivity>,
    /// Log-likelihood after every accepted step.
    #[serde(skip)]
    pub history: Vec<f64>,
}

struct MleProblem {
    parities: Vec<Array2<C64>>,
    f_plus: Vec<f64>,
    f_minus: Vec<f64>,
}

impl MleProblem {
    fn probs(&self, rho: &Array2<C64>) -> Vec<f64> {
        self.parities.par_iter().map(|pi| ((1.0 + trace_prod(rho, pi).re) / 2.0).clamp(1e-15, 1.0 - 1e-15)).collect()
    }

    fn log_likelihood(&self, probs: &[f64]) -> f64 {
        probs
            .iter()
            .enumerate()
            .map(|(k, &p)| self.f_plus[k] * p.ln() + self.f_minus[k] * (1.0 - p).ln())
            .sum()
    }

    /// R = (1/N) Σ_k (f₊/p₊ E₊ + f₋/p₋ E₋) with E± = (I ± Π)/2.
    fn r_operator(&self, probs: &[f64]) -> Array2<C64> {
        let d = self.parities[0].nrows();
        let n = self.parities.len() as f64;
        let mut r = Array2::<C64>::zeros((d, d));
        let mut diag = 0.0;
        for (k, pi) in self.parities.iter().enumerate() {
            let a = self.f_plus[k] / probs[k];
            let b = self.f_minus[k] / (1.0 - probs[k]);
            diag += 0.5 * (a + b);
            let c = 0.5 * (a - b);
            r.zip_mut_with(pi, |x, y| *x += y * c);
        }
        for i in 0..d {
            r[[i, i]] += diag;
        }
        r.mapv(|z| z / n)
    }
}

fn normalized(m: Array2<C64>) -> Array2<C64> {
    let tr: f64 = m.diag().iter().map(|z| z.re).sum();
    let h = (&m + &m.t().mapv(|z| z.conj())).mapv(|z| z * (0.5 / tr));
    h
}

/// Iterative RρR maximum-likelihood reconstruction from displaced-parity
/// data. The step along G = R − I is halved whenever the likelihood would
/// decrease and doubled after each accepted step. ρ stays positive semidefinite and unit-trace at every step.
pub fn mle_reconstruct(data: &[ParityMeasurement], truncation: usize, opts: &MleOptions) -> Result<ReconstructionResult> {
    if truncation < 2 {
        return Err(Error::InvalidDimension(format!("truncation {truncation} < 2")));
    }
    if data.is_empty() {
        return Err(Error::InvalidParameter("no parity measurements".into()));
    }
    if data.len() < truncation * truncation {
        log::warn!("{} parity settings for truncation {truncation}; at least {} recommended", data.len(), truncation * truncation);
    }
    let prob = MleProblem {
        parities: data.par_iter().map(|m| displaced_parity(m.alpha, truncation)).collect(),
        f_plus: data.iter().map(|m| ((1.0 + m.parity) / 2.0).clamp(0.0, 1.0)).collect(),
        f_minus: data.iter().map(|m| ((1.0 - m.parity) / 2.0).clamp(0.0, 1.0)).collect(),
    };
    let d = truncation;
    let mut rho = Array2::from_shape_fn((d, d), |(i, j)| if i == j { C64::new(1.0 / d as f64, 0.0) } else { ZERO });
    let mut probs = prob.probs(&rho);
    let mut ll = prob.log_likelihood(&probs);
    let mut history = vec![ll];
    let mut step = 1.0;
    let mut converged = false;
    let mut quiet = 0;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let r = prob.r_operator(&probs);
        loop {
            let mut re = r.mapv(|z| z * step);
            for i in 0..d {
                re[[i, i]] += 1.0 - step;
            }
            let cand = normalized(re.dot(&rho).dot(&re));
            let cprobs = prob.probs(&cand);
            let cll = prob.log_likelihood(&cprobs);
            if cll >= ll {
                let change = (cll - ll) / ll.abs().max(1e-300);
                rho = cand;
                probs = cprobs;
                ll = cll;
                history.push(ll);
                log::trace!("mle iter {iterations} step {step:.3e} ll {ll:.15e} change {change:.3e}");
                quiet = if change < opts.tol { quiet + 1 } else { 0 };
                converged = quiet >= QUIET_ITERATIONS;
                break;
            }
            if step < 1e-9 {
                // no ascent direction left at machine precision
                converged = true;
                break;
            }
            step *= 0.5;
        }
        if converged {
            break;
        }
        step = (step * 2.0).min(MAX_STEP);
    }
    let rho = DensityMatrix::new_unchecked(Dims::Single(d), rho)?.hermitized();
    Ok(ReconstructionResult {
        rho,
        truncation,
        log_likelihood: ll,
        iterations,
        converged,
        truncation_sensitivity: None,
        history,
    })
}

/// Reconstructs at `center − spread ..= center + spread` and attaches the
/// V_min/V_max variation to the central result.
pub fn mle_with_truncation_sweep(
    data: &[ParityMeasurement],
    center: usize,
    spread: usize,
    opts: &MleOptions,
) -> Result<ReconstructionResult> {
    if center < spread + 2 {
        return Err(Error::InvalidDimension(format!("truncation {center} - {spread} is too small")));
    }
    let truncs: Vec<usize> = (center - spread..=center + spread).collect();
    let results = truncs.iter().map(|&t| mle_reconstruct(data, t, opts)).collect::<Result<Vec<_>>>()?;
    let stats = results.iter().map(|r| covariance_from_rho(&r.rho)).collect::<Result<Vec<_>>>()?;
    let spread_of = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (hi - lo)
    };
    let v_min: Vec<f64> = stats.iter().map(|s| s.v_min).collect();
    let v_max: Vec<f64> = stats.iter().map(|s| s.v_max).collect();
    let sens = TruncationSensitivity {
        v_min_err: spread_of(&v_min),
        v_max_err: spread_of(&v_max),
        truncations: truncs,
        v_min,
        v_max,
    };
    let mut central = results.into_iter().nth(spread).unwrap();
    central.truncation_sensitivity = Some(sens);
    Ok(central)
}

/// Eigen-basis data for evaluating F_Q[ρ, A(θ)] at many angles, with
/// A(θ) = X sin θ + P cos θ.
pub struct QfiKernel {
    fxx: f64,
    fpp: f64,
    fxp: f64,
}

impl QfiKernel {
    pub const CUTOFF: f64 = 1e-10;

    pub fn new(rho: &DensityMatrix) -> Result<Self> {
        let ph = phonon(rho)?;
        let dim = ph.size();
        let e = hermitian_eig(ph.mat())?;
        let v = &e.vectors;
        let vd = v.t().mapv(|z| z.conj());
        let ax = vd.dot(quadrature_x(dim)?.mat()).dot(v);
        let ap = vd.dot(quadrature_p(dim)?.mat()).dot(v);
        let (mut fxx, mut fpp, mut fxp) = (0.0, 0.0, 0.0);
        for k in 0..dim {
            for l in 0..dim {
                let (lk, ll) = (e.values[k].max(0.0), e.values[l].max(0.0));
                let s = lk + ll;
                if s <= Self::CUTOFF {
                    continue;
                }
                let w = 2.0 * (lk - ll).powi(2) / s;
                let (x, p) = (ax[[k, l]], ap[[k, l]]);
                fxx += w * x.norm_sqr();
                fpp += w * p.norm_sqr();
                fxp += w * (x * p.conj()).re;
            }
        }
        Ok(Self { fxx, fpp, fxp })
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (s, c) = theta.sin_cos();
        (s * s * self.fxx + c * c * self.fpp + 2.0 * s * c * self.fxp).max(0.0)
    }
}

/// F_Q = 2 Σ_{λk+λl>0} (λk − λl)²/(λk + λl) |⟨k|A(θ)|l⟩|².
pub fn qfi(rho: &DensityMatrix, theta: f64) -> Result<f64> {
    Ok(QfiKernel::new(rho)?.eval(theta))
}

/// max over θ ∈ [0, π) of F_Q: 1° scan, then golden-section refinement to 1e-4 rad.
pub fn qfi_max(rho: &DensityMatrix) -> Result<(f64, f64)> {
    let k = QfiKernel::new(rho)?;
    let step = PI / 180.0;
    let best = (0..180).map(|i| i as f64 * step).max_by(|a, b| k.eval(*a).total_cmp(&k.eval(*b))).unwrap();
    let (t, _) = golden_section_min(|t| -k.eval(t), best - step, best + step, 1e-4);
    let t = t.rem_euclid(PI);
    Ok((k.eval(t), t))
}
