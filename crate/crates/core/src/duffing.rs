//! Classical driven Duffing oscillator: steady-state occupation, inversion of
//! qubit populations to phonon numbers, bistability thresholds and the
//! two-stage spectroscopy fit.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::numerics::{cubic_roots, least_squares, Bounds, FitOptions, FitReport};
use crate::{Error, Result};

/// Parameters in rad/μs. `omega_a` is the resonance in the same coordinate
/// as the probe detunings it is used with (0 when those are Δ_p already).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub alpha_m: f64,
    pub kappa: f64,
    pub omega_a: f64,
    pub omega_p_amp: f64,
}

impl DuffingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !(self.omega_p_amp >= 0.0) || !self.alpha_m.is_finite() || !self.omega_a.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid Duffing parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyState {
    /// Nonnegative real roots n̄, ascending, with multiplicity.
    pub roots: Vec<f64>,
    /// Two of the roots coincide (the drive sits on a bifurcation point).
    pub double_root: bool,
}

/// Relative separation below which two real roots are reported as double.
const DOUBLE_ROOT_TOL: f64 = 1e-7;

/// Real nonnegative solutions of α_m²n̄³ − 2Δ_p α_m n̄² + (Δ_p² + κ²/4)n̄ = Ω_p²
/// with Δ_p = `probe` − ω_a.
pub fn steady_state_occupation(params: &DuffingParams, probe: f64) -> Result<SteadyState> {
    params.validate()?;
    let dp = probe - params.omega_a;
    let a = params.alpha_m;
    let cr = cubic_roots(a * a, -2.0 * dp * a, dp * dp + 0.25 * params.kappa.powi(2), -params.omega_p_amp.powi(2));
    let mut roots: Vec<f64> = cr.real.into_iter().map(|n| if n.abs() < 1e-300 { 0.0 } else { n }).filter(|&n| n >= 0.0).collect();
    roots.sort_by(f64::total_cmp);
    let double_root = roots.windows(2).any(|w| (w[1] - w[0]).abs() <= DOUBLE_ROOT_TOL * w[1].abs().max(f64::MIN_POSITIVE));
    Ok(SteadyState { roots, double_root })
}

/// Which steady-state solution the spectroscopy model follows where three exist.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Smallest root: the state reached when ramping up from vacuum.
    #[default]
    Lowest,
    Highest,
}

pub fn branch_occupation(params: &DuffingParams, probe: f64, branch: Branch) -> Result<f64> {
    let ss = steady_state_occupation(params, probe)?;
    let pick = match branch {
        Branch::Lowest => ss.roots.first(),
        Branch::Highest => ss.roots.last(),
    };
    pick.copied().ok_or_else(|| Error::InvalidState(format!("no nonnegative steady state at probe {probe}")))
}

/// Steady-state excited population of a qubit driven off-resonantly by the
/// phonon field: P_e = 2Ω_a²/(Δ_a² + 4Ω_a²) with Ω_a² = g_a² n̄.
pub fn qubit_population(n_bar: f64, delta_a: f64, g_a: f64) -> f64 {
    let w2 = g_a * g_a * n_bar;
    2.0 * w2 / (delta_a * delta_a + 4.0 * w2)
}

/// n̄ = P_e Δ_a² / (g_a² (2 − 4P_e)).
pub fn infer_phonon_population(p_e: f64, delta_a: f64, g_a: f64) -> Result<f64> {
    if !(p_e >= 0.0) {
        return Err(Error::InvalidParameter(format!("qubit population {p_e} < 0")));
    }
    if p_e >= 0.5 {
        return Err(Error::Saturation { p_e });
    }
    if g_a == 0.0 {
        return Err(Error::SingularParameter("g_a = 0".into()));
    }
    Ok(p_e * delta_a * delta_a / (g_a * g_a * (2.0 - 4.0 * p_e)))
}

/// Saddle-node points Δ_p± = 2α_m n̄ ± ½√(4α_m²n̄² − κ²), present when 2|α_m|n̄ ≥ κ.
pub fn bifurcation_points(alpha_m: f64, kappa: f64, n_bar: f64) -> Result<Option<(f64, f64)>> {
    if alpha_m == 0.0 {
        return Err(Error::SingularParameter("alpha_m = 0 has no bifurcation".into()));
    }
    let disc = 4.0 * alpha_m * alpha_m * n_bar * n_bar - kappa * kappa;
    if disc < 0.0 {
        return Ok(None);
    }
    let c = 2.0 * alpha_m * n_bar;
    let h = 0.5 * disc.sqrt();
    Ok(Some((c - h, c + h)))
}

/// Onset of bistability n̄ᶜ = |κ/(√3 α_m)|.
pub fn critical_occupation(kappa: f64, alpha_m: f64) -> Result<f64> {
    if alpha_m == 0.0 {
        return Err(Error::SingularParameter("alpha_m = 0: bistability threshold is infinite".into()));
    }
    Ok((kappa / (3f64.sqrt() * alpha_m)).abs())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectroscopyDataset {
    /// Probe detunings (rad/μs).
    pub detunings: Vec<f64>,
    pub qubit_populations: Vec<f64>,
    pub inferred_occupations: Vec<f64>,
    pub delta_a: f64,
    pub g_a: f64,
}

impl SpectroscopyDataset {
    pub fn from_populations(detunings: Vec<f64>, qubit_populations: Vec<f64>, delta_a: f64, g_a: f64) -> Result<Self> {
        if detunings.len() != qubit_populations.len() {
            return Err(Error::DimensionMismatch { expected: detunings.len(), got: qubit_populations.len() });
        }
        let inferred = qubit_populations
            .iter()
            .map(|&p| infer_phonon_population(p, delta_a, g_a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { detunings, qubit_populations, inferred_occupations: inferred, delta_a, g_a })
    }

    /// Reads `delta_p_MHz,p_e` rows (header required); detunings are
    /// converted to rad/μs.
    pub fn read_csv<R: BufRead>(r: R, delta_a: f64, g_a: f64) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(format!("spectroscopy CSV: {m}"));
        let mut lines = r.lines();
        let head = lines.next().ok_or_else(|| bad("empty file".into()))?.map_err(|e| bad(e.to_string()))?;
        let cols: Vec<String> = head.split(',').map(|c| c.trim().to_ascii_lowercase()).collect();
        let ix = cols.iter().position(|c| c == "delta_p_mhz").ok_or_else(|| bad("missing delta_p_MHz column".into()))?;
        let ip = cols.iter().position(|c| c == "p_e").ok_or_else(|| bad("missing p_e column".into()))?;
        let (mut det, mut pop) = (Vec::new(), Vec::new());
        for (k, line) in lines.enumerate() {
            let line = line.map_err(|e| bad(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').collect();
            let get = |i: usize| -> Result<f64> {
                let s = cells.get(i).ok_or_else(|| bad(format!("row {} too short", k + 2)))?;
                s.trim().parse::<f64>().map_err(|e| bad(format!("row {}: {e}", k + 2)))
            };
            det.push(crate::units::mhz(get(ix)?));
            pop.push(get(ip)?);
        }
        Self::from_populations(det, pop, delta_a, g_a)
    }
}

/// Gaussian emphasis around the expected resonance plus a constant floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalityWeight {
    /// Expected resonance (rad/μs); defaults to the initial ω_a.
    pub center: Option<f64>,
    /// Gaussian width in units of κ.
    pub width_kappa: f64,
    pub floor: f64,
}

impl Default for LocalityWeight {
    fn default() -> Self {
        Self { center: None, width_kappa: 5.0, floor: 0.2 }
    }
}

impl LocalityWeight {
    pub fn weight(&self, probe: f64, center: f64, kappa: f64) -> f64 {
        let s = self.width_kappa * kappa;
        let z = (probe - center) / s;
        self.floor + (1.0 - self.floor) * (-0.5 * z * z).exp()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DuffingFit {
    pub params: DuffingParams,
    /// 1-σ errors from the second-stage covariance.
    pub errors: DuffingParams,
    pub stage1: FitReport,
    pub stage2: FitReport,
    pub branch: Branch,
}

/// Two-stage weighted least squares: (α_m, κ, Ω_p) with ω_a frozen, then all
/// four parameters starting from the stage-one optimum.
pub fn fit_spectroscopy(
    data: &SpectroscopyDataset,
    init: &DuffingParams,
    weights: &LocalityWeight,
    branch: Branch,
) -> Result<DuffingFit> {
    let n = data.detunings.len();
    if n < 6 {
        return Err(Error::InvalidParameter(format!("need >= 6 spectroscopy points, got {n}")));
    }
    if data.inferred_occupations.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: data.inferred_occupations.len() });
    }
    init.validate()?;
    let center = weights.center.unwrap_or(init.omega_a);
    let w: Vec<f64> = data.detunings.iter().map(|&x| weights.weight(x, center, init.kappa)).collect();
    let model = |p: &DuffingParams, x: f64| -> f64 { branch_occupation(p, x, branch).unwrap_or(f64::NAN) };
    let resid = |p: &DuffingParams| -> Vec<f64> {
        data.detunings
            .iter()
            .zip(&data.inferred_occupations)
            .zip(&w)
            .map(|((&x, &y), &wi)| {
                let r = wi * (model(p, x) - y);
                if r.is_finite() { r } else { 1e6 }
            })
            .collect()
    };
    let inf = f64::INFINITY;
    let kmin = 1e-9 * init.kappa;
    let opts = FitOptions::default();

    let omega_a = init.omega_a;
    let b1 = Bounds::new(vec![-inf, kmin, 0.0], vec![inf; 3])?;
    let stage1 = least_squares(
        |q: &[f64]| resid(&DuffingParams { alpha_m: q[0], kappa: q[1], omega_a, omega_p_amp: q[2] }),
        &[init.alpha_m, init.kappa, init.omega_p_amp],
        Some(&b1),
        &opts,
    )
    .map_err(|e| Error::FitFailure(format!("stage 1: {e}")))?;
    if !stage1.converged {
        return Err(Error::FitFailure(format!("stage 1 did not converge after {} iterations", stage1.iterations)));
    }

    let s1 = &stage1.params;
    let b2 = Bounds::new(vec![-inf, kmin, -inf, 0.0], vec![inf; 4])?;
    let stage2 = least_squares(
        |q: &[f64]| resid(&DuffingParams { alpha_m: q[0], kappa: q[1], omega_a: q[2], omega_p_amp: q[3] }),
        &[s1[0], s1[1], omega_a, s1[2]],
        Some(&b2),
        &opts,
    )
    .map_err(|e| Error::FitFailure(format!("stage 2: {e}")))?;
    if !stage2.converged {
        return Err(Error::FitFailure(format!("stage 2 did not converge after {} iterations", stage2.iterations)));
    }
    let q = &stage2.params;
    let e = &stage2.errors;
    Ok(DuffingFit {
        params: DuffingParams { alpha_m: q[0], kappa: q[1], omega_a: q[2], omega_p_amp: q[3] },
        errors: DuffingParams { alpha_m: e[0], kappa: e[1], omega_a: e[2], omega_p_amp: e[3] },
        stage1,
        stage2,
        branch,
    })
}
