//! Squeezing limits from decoherence, Kerr nonlinearity and finite
//! measurement time, plus a small sweep-grid engine for running them over
//! parameter grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    evolve_lindblad, free_decay_variances, moment_evolution, variances_from_moments, LindbladSpec, Moments,
    StepControl,
};
use crate::fock::{annihilation, DensityMatrix, Operator};
use crate::model::{inherited_dephasing, DeviceParams};
use crate::numerics::golden_section_min;
use crate::tomography::covariance_from_rho;
use crate::units::variance_to_db;
use crate::{Error, Result, C64};

/// Log-uniform scan points of the time bracket.
const TIME_SCAN_POINTS: usize = 60;

/// Above this ⟨a†a⟩ the moment solution is treated as outside the time
/// horizon: V_min is a difference of O(⟨a†a⟩) numbers and loses precision.
/// In the unstable regime (4ε > γ) V_min has converged long before.
pub const MAX_OCCUPATION: f64 = 1e6;

/// Time bracket [1e-3, 10]·max(1/ε, 1/γ) for the V_min(t) search.
fn time_bracket(epsilon: f64, gamma: f64) -> (f64, f64) {
    let inv = |r: f64| if r > 0.0 { 1.0 / r } else { 0.0 };
    let scale = inv(epsilon).max(inv(gamma));
    (1e-3 * scale, 10.0 * scale)
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceLimit {
    pub delta_a: f64,
    /// Phonon decay rate including the optional Purcell term (1/μs).
    pub gamma: f64,
    pub gamma_phi: f64,
    pub t_opt: f64,
    pub v_min: f64,
    pub db: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceOptions {
    pub purcell: bool,
    pub inherited_dephasing: bool,
}

impl Default for DecoherenceOptions {
    fn default() -> Self {
        Self { purcell: true, inherited_dephasing: true }
    }
}

/// Smallest V_min(t) from vacuum under H = ε(a†² + a²), decay γ and
/// dephasing γ_φ: log scan of the time bracket then golden-section refine.
/// Times where ⟨a†a⟩ exceeds `MAX_OCCUPATION` are excluded.
pub fn optimal_squeezing_moments(epsilon: f64, gamma: f64, gamma_phi: f64) -> Result<(f64, f64)> {
    if epsilon == 0.0 {
        return Ok((0.0, 0.5));
    }
    let (lo, hi) = time_bracket(epsilon.abs(), gamma);
    let vmin_at = |t: f64| -> f64 {
        moment_evolution(0.0, C64::new(epsilon, 0.0), gamma, gamma_phi, Moments::VACUUM, &[0.0, t])
            .ok()
            .filter(|tr| tr.mean_n[1] <= MAX_OCCUPATION)
            .and_then(|tr| variances_from_moments(&tr.point(1)).ok())
            .map_or(f64::INFINITY, |s| s.v_min)
    };
    let ts = log_grid(lo, hi, TIME_SCAN_POINTS);
    let vs: Vec<f64> = ts.iter().map(|&t| vmin_at(t)).collect();
    let k = (0..vs.len()).min_by(|&a, &b| vs[a].total_cmp(&vs[b])).unwrap();
    let a = ts[k.saturating_sub(1)].ln();
    let b = ts[(k + 1).min(ts.len() - 1)].ln();
    let (lt, v) = golden_section_min(|u| vmin_at(u.exp()), a, b, 1e-6);
    Ok(if v <= vs[k] { (lt.exp(), v) } else { (ts[k], vs[k]) })
}

/// Maximum squeezing vs Δ_a for a fixed ε, with κ = 1/T₁ᵖ + (g/Δ_a)²/T₁^q and
/// γ_φ = γ_φ⁰ + Γ_φ(P_e, Δ_a).
pub fn max_squeezing_decoherence(
    epsilon: f64,
    delta_a_grid: &[f64],
    device: &DeviceParams,
    p_e: f64,
    opts: &DecoherenceOptions,
) -> Result<Vec<DecoherenceLimit>> {
    device.validate()?;
    delta_a_grid
        .par_iter()
        .map(|&da| {
            let gamma = if opts.purcell { device.phonon_decay_with_purcell(da)? } else { device.gamma_phonon() };
            let mut gamma_phi = device.gamma_phi_phonon();
            if opts.inherited_dephasing {
                gamma_phi += inherited_dephasing(p_e, device, da)?;
            }
            let (t_opt, v_min) = optimal_squeezing_moments(epsilon, gamma, gamma_phi)?;
            Ok(DecoherenceLimit { delta_a: da, gamma, gamma_phi, t_opt, v_min, db: variance_to_db(v_min) })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KerrLimit {
    pub epsilon: f64,
    pub gamma: f64,
    pub kerr: f64,
    pub t_opt: f64,
    pub v_min: f64,
    pub db: f64,
    /// Phonon truncation the reported value came from.
    pub dim: usize,
    /// The first truncation leaked population and the point was rerun larger.
    pub reran: bool,
    /// Population still leaks at the largest truncation tried.
    pub truncation_warning: bool,
}

#[derive(Clone, Debug)]
pub struct KerrSweepOptions {
    pub dim: usize,
    /// Population in the top two levels that triggers a rerun.
    pub leak_tol: f64,
    /// Extra levels added per rerun, and how many reruns to allow.
    pub dim_step: usize,
    pub max_reruns: usize,
    pub step: StepControl,
}

impl Default for KerrSweepOptions {
    fn default() -> Self {
        Self { dim: 30, leak_tol: 1e-6, dim_step: 10, max_reruns: 2, step: StepControl::default() }
    }
}

fn top_population(rho: &DensityMatrix) -> f64 {
    let p = rho.populations();
    p.iter().rev().take(2).sum()
}

fn kerr_run(epsilon: f64, gamma: f64, kerr: f64, dim: usize, step: &StepControl) -> Result<(f64, f64, f64)> {
    let spec = kerr_limit_spec(epsilon, gamma, kerr, dim)?;
    let (lo, hi) = time_bracket(epsilon.abs(), gamma);
    let mut grid = vec![0.0];
    grid.extend(log_grid(lo, hi, TIME_SCAN_POINTS));
    let states = evolve_lindblad(&DensityMatrix::vacuum(dim), &spec, &grid, step)?;
    let vs = states.iter().map(|r| covariance_from_rho(r).map(|s| s.v_min)).collect::<Result<Vec<_>>>()?;
    let k = (0..vs.len()).min_by(|&x, &y| vs[x].total_cmp(&vs[y])).unwrap();
    let leak = states.iter().take(k + 2).map(top_population).fold(0.0, f64::max);
    if k == 0 {
        return Ok((0.0, vs[0], leak));
    }
    // refine between the neighbours of the best scan point, restarting from
    // the stored state at the left end
    let left = k - 1;
    let right = (k + 1).min(grid.len() - 1);
    let t0 = grid[left];
    let vmin_at = |t: f64| -> f64 {
        if t <= t0 {
            return vs[left];
        }
        evolve_lindblad(&states[left], &spec, &[t0, t], step)
            .and_then(|s| covariance_from_rho(&s[1]))
            .map(|s| s.v_min)
            .unwrap_or(f64::INFINITY)
    };
    let (t, v) = golden_section_min(vmin_at, t0, grid[right], 1e-4 * (grid[right] - t0));
    Ok(if v <= vs[k] { (t, v, leak) } else { (grid[k], vs[k], leak) })
}

/// Best squeezing from vacuum under H = ε(a² + a†²) − K a†²a² with decay √γ a,
/// from Lindblad evolution; reruns at larger truncation when the top levels
/// become populated.
pub fn max_squeezing_kerr_point(epsilon: f64, gamma: f64, kerr: f64, opts: &KerrSweepOptions) -> Result<KerrLimit> {
    if !(gamma >= 0.0) || !epsilon.is_finite() || !kerr.is_finite() {
        return Err(Error::InvalidParameter("Kerr-limit parameters must be finite with gamma >= 0".into()));
    }
    if epsilon == 0.0 {
        return Ok(KerrLimit { epsilon, gamma, kerr, t_opt: 0.0, v_min: 0.5, db: 0.0, dim: opts.dim, reran: false, truncation_warning: false });
    }
    let mut dim = opts.dim;
    let mut reruns = 0;
    loop {
        let (t_opt, v_min, leak) = kerr_run(epsilon, gamma, kerr, dim, &opts.step)?;
        let leaking = leak > opts.leak_tol;
        if !leaking || reruns >= opts.max_reruns {
            if leaking {
                log::warn!("Kerr limit at eps={epsilon}, gamma={gamma}, K={kerr}: population {leak:.2e} in top levels at dim {dim}");
            }
            return Ok(KerrLimit {
                epsilon,
                gamma,
                kerr,
                t_opt,
                v_min,
                db: variance_to_db(v_min),
                dim,
                reran: reruns > 0,
                truncation_warning: leaking,
            });
        }
        reruns += 1;
        dim += opts.dim_step;
    }
}

/// Kerr-limited squeezing over (ε/K, γ/K) in units K = 1; rows follow
/// `eps_over_k` outer, `gamma_over_k` inner.
pub fn max_squeezing_kerr(eps_over_k: &[f64], gamma_over_k: &[f64], opts: &KerrSweepOptions) -> Result<Vec<KerrLimit>> {
    if eps_over_k.iter().chain(gamma_over_k).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("Kerr sweep grids must be positive".into()));
    }
    let pts: Vec<(f64, f64)> = eps_over_k.iter().flat_map(|&e| gamma_over_k.iter().map(move |&g| (e, g))).collect();
    pts.par_iter().map(|&(e, g)| max_squeezing_kerr_point(e, g, 1.0, opts)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementLoss {
    pub v0: f64,
    pub t_meas: f64,
    pub v_measured: f64,
    pub initial_db: f64,
    pub measured_db: f64,
}

/// Minimum variance after pure energy relaxation for `t_meas`.
pub fn measurement_time_loss(v0: f64, gamma: f64, t_meas: f64) -> Result<MeasurementLoss> {
    if !(t_meas >= 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidParameter("t_meas and gamma must be non-negative".into()));
    }
    let (v, _) = free_decay_variances(v0, gamma, 0.0, t_meas)?;
    Ok(MeasurementLoss { v0, t_meas, v_measured: v, initial_db: variance_to_db(v0), measured_db: variance_to_db(v) })
}

/// Named axes for a sweep; points are the Cartesian product with the last
/// axis varying fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<f64>)>,
    pub metric: String,
}

impl SweepGrid {
    pub fn new(axes: Vec<(String, Vec<f64>)>, metric: &str) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|(_, v)| v.is_empty()) {
            return Err(Error::InvalidParameter("sweep axes must be nonempty".into()));
        }
        if axes.iter().any(|(_, v)| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("sweep values must be finite".into()));
        }
        Ok(Self { axes, metric: metric.to_string() })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of the `k`-th point.
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.axes.len()];
        for (i, (_, v)) in self.axes.iter().enumerate().rev() {
            out[i] = v[k % v.len()];
            k /= v.len();
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Evaluates `f` on every point in parallel; results keep grid order.
    pub fn run<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        (0..self.len()).into_par_iter().map(|k| f(&self.point(k))).collect()
    }

    /// Long format: one column per axis plus the metric.
    pub fn write_long_csv<W: Write>(&self, values: &[f64], mut w: W) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: values.len() });
        }
        let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
        let names: Vec<&str> = self.axes.iter().map(|(n, _)| n.as_str()).collect();
        writeln!(w, "{},{}", names.join(","), self.metric).map_err(io)?;
        for (k, v) in values.iter().enumerate() {
            let coords: Vec<String> = self.point(k).iter().map(|c| c.to_string()).collect();
            writeln!(w, "{},{v}", coords.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

/// Lindblad spec for the squeezed-Kerr oscillator used by the Kerr sweep,
/// exposed for callers that want the full trajectory.
pub fn kerr_limit_spec(epsilon: f64, gamma: f64, kerr: f64, dim: usize) -> Result<LindbladSpec> {
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let h: Operator = &(&(&a2 + &ad2) * epsilon) - &(&(&ad2 * &a2) * kerr);
    LindbladSpec::constant(h, vec![(a, gamma)])
}
