//! Run configuration. Frequencies are entered in linear MHz and times in μs;
//! everything is converted to rad/μs at this boundary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sqkerr::model::{resonant_correction, DeviceParams, DriveParams};
use sqkerr::units::mhz;

use crate::error::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub workers: Option<usize>,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub drives: DriveConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    pub effective: Option<EffectiveConfig>,
    pub sweep: Option<SweepConfig>,
    pub tomography: Option<TomographyConfig>,
    pub duffing: Option<DuffingConfig>,
    pub limits: Option<LimitsConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceConfig {
    pub qubit_mhz: f64,
    pub phonon_mhz: f64,
    pub anharmonicity_mhz: f64,
    pub coupling_mhz: f64,
    pub t1_qubit_us: f64,
    pub t2_qubit_us: f64,
    pub t1_phonon_us: f64,
    pub t2_phonon_us: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            qubit_mhz: 5042.0,
            phonon_mhz: 5023.0,
            anharmonicity_mhz: 185.0,
            coupling_mhz: 0.292,
            t1_qubit_us: 17.0,
            t2_qubit_us: 24.0,
            t1_phonon_us: 132.0,
            t2_phonon_us: 210.0,
        }
    }
}

impl DeviceConfig {
    pub fn params(&self) -> Result<DeviceParams, CliError> {
        let p = DeviceParams {
            omega_q: mhz(self.qubit_mhz),
            omega_a: mhz(self.phonon_mhz),
            alpha: mhz(self.anharmonicity_mhz),
            g: mhz(self.coupling_mhz),
            t1_qubit: self.t1_qubit_us,
            t2_qubit: self.t2_qubit_us,
            t1_phonon: self.t1_phonon_us,
            t2_phonon: self.t2_phonon_us,
        };
        p.validate().map_err(|e| CliError::config("device", e))?;
        Ok(p)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveConfig {
    pub xi1: f64,
    pub xi2: f64,
    /// When set, ξ₁ and ξ₂ are ignored and chosen with this product so the
    /// drives' Stark shifts cancel.
    pub stark_balanced_product: Option<f64>,
    pub delta_a_mhz: f64,
    /// Correction δ on drive 2; defaults to 2g²/Δ_a.
    pub correction_mhz: Option<f64>,
    pub phase: f64,
    pub delta21_mhz: f64,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            xi1: 0.0,
            xi2: 0.0,
            stark_balanced_product: None,
            delta_a_mhz: 1.5,
            correction_mhz: None,
            phase: 0.0,
            delta21_mhz: 30.0,
        }
    }
}

impl DriveConfig {
    pub fn params(&self, device: &DeviceParams) -> Result<DriveParams, CliError> {
        let da = mhz(self.delta_a_mhz);
        let corr = match self.correction_mhz {
            Some(c) => mhz(c),
            None => resonant_correction(device.g, da).map_err(|e| CliError::config("drives", e))?,
        };
        let d = match self.stark_balanced_product {
            Some(p) => DriveParams::stark_balanced(p, da, corr, self.phase, mhz(self.delta21_mhz))
                .map_err(|e| CliError::config("drives", e))?,
            None => DriveParams::symmetric(self.xi1, self.xi2, da, corr, self.phase, mhz(self.delta21_mhz)),
        };
        d.validate().map_err(|e| CliError::config("drives", e))?;
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Effective,
    Full,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub model: ModelKind,
    pub qubit_levels: usize,
    pub phonon_levels: usize,
    pub rtol: f64,
    pub atol: f64,
    pub t_max_us: f64,
    pub steps: usize,
    /// Times at which Wigner maps are written.
    pub snapshots_us: Vec<f64>,
    pub wigner_extent: f64,
    pub wigner_points: usize,
    /// Fit the closed-form squeezing curve to V_min(t).
    pub fit_rate: bool,
    /// Search the drive-2 correction that maximizes squeezing (full model).
    pub calibrate: bool,
    pub calibrate_span_mhz: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Effective,
            qubit_levels: 4,
            phonon_levels: 30,
            rtol: 1e-8,
            atol: 1e-10,
            t_max_us: 12.0,
            steps: 48,
            snapshots_us: Vec::new(),
            wigner_extent: 3.0,
            wigner_points: 61,
            fit_rate: false,
            calibrate: false,
            calibrate_span_mhz: 0.04,
        }
    }
}

/// Squeezed-Kerr parameters entered directly instead of derived from the
/// device and drives.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectiveConfig {
    pub detuning_mhz: f64,
    pub epsilon_mhz: f64,
    pub epsilon_phase: f64,
    pub kerr_mhz: f64,
    /// γ⁻¹ in μs; 0 disables decay.
    pub decay_time_us: f64,
    /// Pure dephasing time (γ_φ⁻¹) in μs; 0 disables dephasing.
    pub dephasing_time_us: f64,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        Self { detuning_mhz: 0.0, epsilon_mhz: 0.0, epsilon_phase: 0.0, kerr_mhz: 0.0, decay_time_us: 0.0, dephasing_time_us: 0.0 }
    }
}

pub fn rate_from_time(t: f64) -> f64 {
    if t > 0.0 {
        1.0 / t
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepQuantity {
    /// Closed-form ε; axes from xi1, xi2, xi_product, delta_a_mhz, delta21_mhz, coupling_mhz.
    SqueezingRate,
    /// Perturbative and exact K; axes delta_a_mhz, coupling_mhz, anharmonicity_mhz.
    Kerr,
    /// Full-model ε from time-domain simulation; same axes as squeezing_rate.
    SimulatedRate,
    /// Decoherence-limited squeezing; axes epsilon_mhz, delta_a_mhz, p_e.
    DecoherenceLimit,
    /// Kerr-limited squeezing; axes eps_over_k, gamma_over_k.
    KerrLimit,
    /// Squeezing left after a measurement delay; axes v0, t_meas_us, decay_time_us.
    MeasurementLoss,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    #[serde(default)]
    pub values: Vec<f64>,
    /// Alternative to `values`: `[start, stop, count]`, inclusive.
    pub linspace: Option<(f64, f64, usize)>,
}

impl SweepAxis {
    pub fn resolved(&self) -> Vec<f64> {
        match self.linspace {
            Some((a, b, n)) if n > 1 => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
            Some((a, _, 1)) => vec![a],
            Some(_) => Vec::new(),
            None => self.values.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub quantity: SweepQuantity,
    pub axes: Vec<SweepAxis>,
    /// Qubit excited population used by the decoherence limit when no p_e axis is given.
    #[serde(default)]
    pub p_e: f64,
    #[serde(default = "yes")]
    pub cache: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographyConfig {
    pub input: Option<PathBuf>,
    pub truncation: usize,
    /// Half-width of the truncation sweep used for error bars (0 disables it).
    pub truncation_spread: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Standard deviation of Gaussian noise added to the parities (seeded).
    pub parity_noise: f64,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        Self { input: None, truncation: 15, truncation_spread: 2, max_iter: 5000, tol: 1e-10, parity_noise: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchChoice {
    Lowest,
    Highest,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingConfig {
    pub input: Option<PathBuf>,
    /// Qubit-phonon detuning and coupling used to invert P_e into n̄.
    pub delta_a_mhz: f64,
    pub coupling_mhz: f64,
    pub alpha_m_mhz: f64,
    pub kappa_mhz: f64,
    #[serde(default)]
    pub omega_a_mhz: f64,
    pub drive_mhz: f64,
    #[serde(default = "lowest")]
    pub branch: BranchChoice,
    #[serde(default = "five")]
    pub locality_width_kappa: f64,
    #[serde(default = "floor")]
    pub locality_floor: f64,
}

fn lowest() -> BranchChoice {
    BranchChoice::Lowest
}
fn five() -> f64 {
    5.0
}
fn floor() -> f64 {
    0.2
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    /// Decoherence limit: squeezing rates (MHz) and Δ_a grid (MHz).
    pub epsilon_mhz: Vec<f64>,
    pub delta_a_mhz: Vec<f64>,
    pub p_e: f64,
    pub purcell: bool,
    pub inherited_dephasing: bool,
    /// Kerr limit grids in units of K.
    pub eps_over_k: Vec<f64>,
    pub gamma_over_k: Vec<f64>,
    pub kerr_dim: usize,
    /// Measurement-time loss: initial variance, decay time, delays.
    pub v0: f64,
    pub decay_time_us: f64,
    pub t_meas_us: Vec<f64>,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self {
            epsilon_mhz: Vec::new(),
            delta_a_mhz: Vec::new(),
            p_e: 0.0,
            purcell: true,
            inherited_dephasing: true,
            eps_over_k: Vec::new(),
            gamma_over_k: Vec::new(),
            kerr_dim: 30,
            v0: 0.25,
            decay_time_us: 100.0,
            t_meas_us: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn simulation_checked(&self) -> Result<&SimulationConfig, CliError> {
        let s = &self.simulation;
        let bad = |m: &str| Err(CliError::Config(format!("simulation: {m}")));
        if s.phonon_levels < 4 {
            return bad("phonon_levels must be >= 4");
        }
        if !(s.t_max_us > 0.0) || s.steps == 0 {
            return bad("t_max_us must be positive and steps >= 1");
        }
        if !(s.rtol > 0.0 && s.atol > 0.0) {
            return bad("rtol and atol must be positive");
        }
        if s.snapshots_us.iter().any(|t| !(*t >= 0.0 && *t <= s.t_max_us)) {
            return bad("snapshots_us must lie in [0, t_max_us]");
        }
        if s.wigner_points < 2 || !(s.wigner_extent > 0.0) {
            return bad("wigner grid needs >= 2 points and a positive extent");
        }
        Ok(s)
    }
}
