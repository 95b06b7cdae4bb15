//! Device and drive parameters, effective-model constants and Hamiltonian
//! builders.
//!
//! Sign conventions: in the frame rotating at the (Stark-shifted) qubit
//! frequency, `Δ_a = ω_a − ω_q` and a drive at `ω_j` has detuning
//! `Δ_j = ω_j − ω_q`. The anharmonicity `α` is stored positive and enters the
//! Hamiltonian as `−(α/2) q†² q²`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::fock::{annihilation, number, on_phonon, on_qubit, Dims, HilbertDims, Operator};
use crate::units::mhz;
use crate::{Error, Result, C64};

/// Separation of the two squeezing drives, Δ₂ − Δ₁ (rad/μs), for the default
/// symmetric placement.
pub const DEFAULT_DELTA21: f64 = 2.0 * std::f64::consts::PI * 30.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_q: f64,
    pub omega_a: f64,
    pub alpha: f64,
    pub g: f64,
    pub t1_qubit: f64,
    pub t2_qubit: f64,
    pub t1_phonon: f64,
    pub t2_phonon: f64,
}

impl Default for DeviceParams {
    /// Measured device values (qubit at 5.042 GHz, phonon mode at 5.023 GHz).
    fn default() -> Self {
        Self {
            omega_q: mhz(5042.0),
            omega_a: mhz(5023.0),
            alpha: mhz(185.0),
            g: mhz(0.292),
            t1_qubit: 17.0,
            t2_qubit: 24.0,
            t1_phonon: 132.0,
            t2_phonon: 210.0,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_q", self.omega_q),
            ("omega_a", self.omega_a),
            ("alpha", self.alpha),
            ("g", self.g),
            ("t1_qubit", self.t1_qubit),
            ("t2_qubit", self.t2_qubit),
            ("t1_phonon", self.t1_phonon),
            ("t2_phonon", self.t2_phonon),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        for (name, v) in [("alpha", self.alpha), ("t1_qubit", self.t1_qubit), ("t1_phonon", self.t1_phonon)] {
            if v == 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if self.t2_qubit > 2.0 * self.t1_qubit || self.t2_phonon > 2.0 * self.t1_phonon {
            return Err(Error::InvalidParameter("T2 must not exceed 2·T1".into()));
        }
        Ok(())
    }

    /// Qubit energy relaxation rate 1/T₁ (1/μs).
    pub fn gamma_qubit(&self) -> f64 {
        1.0 / self.t1_qubit
    }

    pub fn gamma_phonon(&self) -> f64 {
        1.0 / self.t1_phonon
    }

    /// Pure dephasing rate 1/T₂ − 1/(2T₁) of the phonon (0 when T₂ = 0 is
    /// used to mean "not specified").
    pub fn gamma_phi_phonon(&self) -> f64 {
        if self.t2_phonon == 0.0 {
            0.0
        } else {
            (1.0 / self.t2_phonon - 0.5 / self.t1_phonon).max(0.0)
        }
    }

    pub fn gamma_phi_qubit(&self) -> f64 {
        if self.t2_qubit == 0.0 {
            0.0
        } else {
            (1.0 / self.t2_qubit - 0.5 / self.t1_qubit).max(0.0)
        }
    }

    /// Phonon decay including the Purcell contribution of the qubit,
    /// 1/T₁ᵖ + (g/Δ_a)² γ_q.
    pub fn phonon_decay_with_purcell(&self, delta_a: f64) -> Result<f64> {
        if delta_a == 0.0 {
            return Err(Error::SingularParameter("delta_a = 0".into()));
        }
        Ok(self.gamma_phonon() + (self.g / delta_a).powi(2) * self.gamma_qubit())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub xi1: f64,
    pub xi2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub phi: f64,
    pub delta_correction: f64,
    pub delta_a: f64,
}

impl DriveParams {
    /// Drives placed symmetrically about the phonon: Δ₁ = Δ_a − Δ₂₁/2 and
    /// Δ₂ = Δ_a + Δ₂₁/2 + δ.
    pub fn symmetric(xi1: f64, xi2: f64, delta_a: f64, delta_correction: f64, phi: f64, delta21: f64) -> Self {
        Self {
            xi1,
            xi2,
            delta1: delta_a - 0.5 * delta21,
            delta2: delta_a + 0.5 * delta21 + delta_correction,
            phi,
            delta_correction,
            delta_a,
        }
    }

    /// Symmetric placement with ξ₁ξ₂ = `product` and the ratio chosen so the
    /// leading-order AC Stark shifts of the two drives cancel,
    /// ξ₁²|Δ₁| = ξ₂²|Δ₂|. Needs the drives on opposite sides of the qubit.
    pub fn stark_balanced(product: f64, delta_a: f64, delta_correction: f64, phi: f64, delta21: f64) -> Result<Self> {
        let probe = Self::symmetric(1.0, 1.0, delta_a, delta_correction, phi, delta21);
        if !(product > 0.0) || probe.delta1 * probe.delta2 >= 0.0 {
            return Err(Error::InvalidParameter(
                "Stark balancing needs product > 0 and drives on both sides of the qubit".into(),
            ));
        }
        let ratio = (probe.delta2 / probe.delta1).abs().sqrt();
        let xi2 = (product / ratio).sqrt();
        Ok(Self { xi1: ratio * xi2, xi2, ..probe })
    }

    /// Same drives with the correction δ on drive 2 replaced by `c`.
    pub fn with_correction(&self, c: f64) -> Self {
        Self { delta2: self.delta2 - self.delta_correction + c, delta_correction: c, ..*self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi1.abs() < 1.0 && self.xi2.abs() < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "drive strengths must satisfy |xi| < 1 (got {}, {})",
                self.xi1, self.xi2
            )));
        }
        for v in [self.delta1, self.delta2, self.phi, self.delta_correction, self.delta_a] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter("non-finite drive parameter".into()));
            }
        }
        Ok(())
    }

    /// Σ₂₁ = Δ₁ + Δ₂.
    pub fn sigma21(&self) -> f64 {
        self.delta1 + self.delta2
    }

    /// Drive amplitudes Ω_j = ξ_j |Δ_j|.
    pub fn amplitudes(&self) -> (f64, f64) {
        (self.xi1 * self.delta1.abs(), self.xi2 * self.delta2.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub detuning: f64,
    pub epsilon: C64,
    pub kerr: f64,
    pub omega_a_shifted: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KerrMethod {
    Exact(HilbertDims),
    Perturbative,
}

/// ε = 2(g²/Δ_a) ξ₁ξ₂ α/(Σ₂₁ + α) e^{−iφ}.
pub fn squeezing_rate(device: &DeviceParams, drives: &DriveParams) -> Result<C64> {
    if drives.delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0".into()));
    }
    let denom = drives.sigma21() + device.alpha;
    if denom == 0.0 {
        return Err(Error::SingularParameter("sigma21 + alpha = 0".into()));
    }
    let mag = 2.0 * device.g * device.g / drives.delta_a * drives.xi1 * drives.xi2 * device.alpha / denom;
    Ok(C64::from_polar(1.0, -drives.phi) * mag)
}

/// K = (g⁴/Δ_a³)(1 + Δ_a²/(α + Δ_a)²), the dispersive-limit expression with
/// its printed correction factor.
pub fn kerr_perturbative(g: f64, delta_a: f64, alpha: f64) -> Result<f64> {
    if delta_a == 0.0 || alpha + delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0 or alpha + delta_a = 0".into()));
    }
    Ok(g.powi(4) / delta_a.powi(3) * (1.0 + delta_a.powi(2) / (alpha + delta_a).powi(2)))
}

/// Exact fourth-order coefficient of the same Hamiltonian,
/// K = (g⁴/Δ_a³)·α/(α + 2Δ_a). Reduces to g⁴/Δ_a³ for α ≫ Δ_a and to 0 for a
/// harmonic coupler (α = 0).
pub fn kerr_fourth_order(g: f64, delta_a: f64, alpha: f64) -> Result<f64> {
    if delta_a == 0.0 || alpha + 2.0 * delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0 or alpha + 2 delta_a = 0".into()));
    }
    Ok(g.powi(4) / delta_a.powi(3) * alpha / (alpha + 2.0 * delta_a))
}

/// Undriven Hamiltonian Δ_a a†a − (α/2) q†²q² + g(q†a + q a†) in the qubit
/// frame.
pub fn undriven_hamiltonian(g: f64, alpha: f64, delta_a: f64, dims: HilbertDims) -> Result<Operator> {
    let q = on_qubit(&qubit_lowering(dims.qubit_levels)?, dims)?;
    let a = on_phonon(&annihilation(dims.phonon_levels)?, dims)?;
    let qd = q.dagger();
    let ad = a.dagger();
    let n = on_phonon(&number(dims.phonon_levels)?, dims)?;
    let anh = &(&(&qd * &qd) * &q) * &q;
    let coupling = &(&qd * &a) + &(&q * &ad);
    Ok(&(&(&n * delta_a) - &(&anh * (0.5 * alpha))) + &(&coupling * g))
}

/// K from exact diagonalization: eigenstates are labelled |0,l⟩ (l = 0, 1, 2)
/// by maximum overlap with the bare product states and
/// K = ((E₁ − E₀) − (E₂ − E₁))/2.
pub fn kerr_exact(device: &DeviceParams, delta_a: f64, dims: HilbertDims) -> Result<f64> {
    dims.require_two_photon()?;
    if dims.phonon_levels < 6 {
        return Err(Error::InvalidDimension(format!("kerr_exact needs phonon_levels >= 6 (got {})", dims.phonon_levels)));
    }
    let h = undriven_hamiltonian(device.g, device.alpha, delta_a, dims)?;
    let energies: Vec<f64> = if device.g == 0.0 {
        (0..3).map(|l| h.mat()[[dims.index(0, l), dims.index(0, l)]].re).collect()
    } else {
        let eig = h.eig()?;
        let mut used = Vec::new();
        let mut out = Vec::new();
        for l in 0..3 {
            let idx = dims.index(0, l);
            let mut ov: Vec<(f64, usize)> = (0..h.size()).map(|k| (eig.vectors[[idx, k]].norm(), k)).collect();
            ov.sort_by(|a, b| b.0.total_cmp(&a.0));
            if ov[0].0 - ov[1].0 < 1e-6 {
                return Err(Error::Degeneracy(format!(
                    "bare state |0,{l}> overlaps two eigenvectors equally ({:.6} vs {:.6})",
                    ov[0].0, ov[1].0
                )));
            }
            if used.contains(&ov[0].1) {
                return Err(Error::Degeneracy(format!("eigenvector {} assigned twice", ov[0].1)));
            }
            used.push(ov[0].1);
            out.push(eig.values[ov[0].1]);
        }
        out
    };
    Ok(((energies[1] - energies[0]) - (energies[2] - energies[1])) / 2.0)
}

/// Correction δ that nulls the effective detuning, 2g²/Δ_a.
pub fn resonant_correction(g: f64, delta_a: f64) -> Result<f64> {
    if delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0".into()));
    }
    Ok(2.0 * g * g / delta_a)
}

/// Effective squeezed-Kerr constants. Δ = (ω₁ + ω₂ − 2ω_a′)/2 with
/// ω_a′ = ω_a + g²/Δ_a and ω_j = ω_a − Δ_a + Δ_j.
pub fn effective_params(device: &DeviceParams, drives: &DriveParams, kerr: KerrMethod) -> Result<EffectiveParams> {
    device.validate()?;
    drives.validate()?;
    if drives.delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0".into()));
    }
    let shift = device.g * device.g / drives.delta_a;
    let omega_a_shifted = device.omega_a + shift;
    let omega_qs = device.omega_a - drives.delta_a;
    let w1 = omega_qs + drives.delta1;
    let w2 = omega_qs + drives.delta2;
    let detuning = (w1 + w2 - 2.0 * omega_a_shifted) / 2.0;
    let epsilon = squeezing_rate(device, drives)?;
    let kerr = match kerr {
        KerrMethod::Exact(dims) => kerr_exact(device, drives.delta_a, dims)?,
        KerrMethod::Perturbative => kerr_perturbative(device.g, drives.delta_a, device.alpha)?,
    };
    Ok(EffectiveParams { detuning, epsilon, kerr, omega_a_shifted })
}

/// Γ_φ = (γ/2) Re[√((1 + 2iχ/γ)² + 8iχP_e/γ) − 1], χ = 2g²/Δ_a, γ = 1/T₁^q.
pub fn inherited_dephasing(p_e: f64, device: &DeviceParams, delta_a: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_e) {
        return Err(Error::InvalidParameter(format!("p_e = {p_e} outside [0, 1]")));
    }
    if delta_a == 0.0 {
        return Err(Error::SingularParameter("delta_a = 0".into()));
    }
    let gamma = device.gamma_qubit();
    let chi = 2.0 * device.g * device.g / delta_a;
    let i = C64::i();
    let z = (C64::new(1.0, 0.0) + i * (2.0 * chi / gamma)).powu(2) + i * (8.0 * chi * p_e / gamma);
    Ok(0.5 * gamma * (z.sqrt() - 1.0).re)
}

/// One term `amp·e^{i freq t}·op + h.c.` of a driven Hamiltonian.
#[derive(Clone, Debug)]
pub struct DriveTerm {
    pub op: Operator,
    pub amp: C64,
    pub freq: f64,
}

impl DriveTerm {
    pub fn coefficient(&self, t: f64) -> C64 {
        self.amp * C64::from_polar(1.0, self.freq * t)
    }
}

/// H(t) = H₀ + Σ_k (c_k(t) O_k + c_k(t)* O_k†).
#[derive(Clone, Debug)]
pub struct TimeDependentHamiltonian {
    pub static_part: Operator,
    pub terms: Vec<DriveTerm>,
}

impl TimeDependentHamiltonian {
    pub fn dims(&self) -> Dims {
        self.static_part.dims()
    }

    pub fn at(&self, t: f64) -> Operator {
        let mut h = self.static_part.clone();
        for term in &self.terms {
            let c = term.coefficient(t);
            let x = term.op.scale(c);
            h = &(&h + &x) + &x.dagger();
        }
        h
    }

    /// Largest angular frequency among the drive terms.
    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.freq.abs()).fold(0.0, f64::max)
    }
}

fn qubit_lowering(levels: usize) -> Result<Operator> {
    if levels == 1 {
        return Operator::from_matrix(Array2::zeros((1, 1)));
    }
    annihilation(levels)
}

fn build_full(device: &DeviceParams, drives: &DriveParams, dims: HilbertDims) -> Result<TimeDependentHamiltonian> {
    device.validate()?;
    drives.validate()?;
    let q = on_qubit(&qubit_lowering(dims.qubit_levels)?, dims)?;
    let a = on_phonon(&annihilation(dims.phonon_levels)?, dims)?;
    let qd = q.dagger();
    let anh = &(&(&qd * &qd) * &q) * &q;
    let static_part = &anh * (-0.5 * device.alpha);
    let (o1, o2) = drives.amplitudes();
    let terms = vec![
        DriveTerm { op: &a.dagger() * &q, amp: C64::new(device.g, 0.0), freq: drives.delta_a },
        DriveTerm { op: qd.clone(), amp: C64::new(o1, 0.0), freq: -drives.delta1 },
        DriveTerm { op: qd, amp: C64::from_polar(o2, -drives.phi), freq: -drives.delta2 },
    ];
    Ok(TimeDependentHamiltonian { static_part, terms })
}

/// Driven qubit-phonon Hamiltonian in the qubit rotating frame,
/// H(t) = −(α/2)q†²q² + g(a†q e^{iΔ_a t} + h.c.) + (c(t) q† + h.c.),
/// c(t) = Ω₁e^{−iΔ₁t} + Ω₂e^{−iΔ₂t−iφ}. The stored `delta_a` is used as the
/// coupling detuning. Requires at least three qubit levels.
pub fn full_hamiltonian(device: &DeviceParams, drives: &DriveParams, dims: HilbertDims) -> Result<TimeDependentHamiltonian> {
    dims.require_two_photon()?;
    build_full(device, drives, dims)
}

/// Same as [`full_hamiltonian`] but accepts a two-level qubit. Only meant as a
/// negative control: the q†² pathway is absent on two levels.
pub fn full_hamiltonian_allow_two_level(
    device: &DeviceParams,
    drives: &DriveParams,
    dims: HilbertDims,
) -> Result<TimeDependentHamiltonian> {
    build_full(device, drives, dims)
}

/// H(t) at one instant.
pub fn build_full_hamiltonian(device: &DeviceParams, drives: &DriveParams, dims: HilbertDims, t: f64) -> Result<Operator> {
    Ok(full_hamiltonian(device, drives, dims)?.at(t))
}

/// H = −Δ a†a − (ε a†² + ε* a²) − K a†²a².
pub fn build_squeezed_kerr_hamiltonian(eff: &EffectiveParams, dim: usize) -> Result<Operator> {
    if dim < 4 {
        return Err(Error::InvalidDimension(format!("squeezed-Kerr model needs dim >= 4 (got {dim})")));
    }
    let a = annihilation(dim)?;
    let ad = a.dagger();
    let n = number(dim)?;
    let ad2 = &ad * &ad;
    let a2 = &a * &a;
    let kerr = &ad2 * &a2;
    let h = &(&(&n * -eff.detuning) - &(&(&ad2 * eff.epsilon) + &(&a2 * eff.epsilon.conj()))) - &(&kerr * eff.kerr);
    Ok(h)
}

impl Operator {
    /// Leading `k × k` block (single-mode).
    pub fn truncate_to(&self, k: usize) -> Operator {
        let m = self.mat().slice(ndarray::s![..k, ..k]).to_owned();
        Operator::from_matrix(m).expect("square block")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::khz;

    fn fig2_device() -> DeviceParams {
        DeviceParams { g: mhz(0.292), alpha: mhz(185.0), ..DeviceParams::default() }
    }

    #[test]
    fn squeezing_rate_fig2_point() {
        let dev = fig2_device();
        let mut dr = DriveParams::symmetric(0.28, 0.26, mhz(1.5), 0.0, 0.0, DEFAULT_DELTA21);
        dr.delta1 = mhz(1.5) - mhz(15.0);
        dr.delta2 = mhz(1.5) + mhz(15.0);
        assert!((dr.sigma21() - mhz(3.0)).abs() < 1e-12);
        let eps = squeezing_rate(&dev, &dr).unwrap();
        // 2·(0.292²/1.5)·0.28·0.26·185/188 MHz
        let expect = khz(1e3 * 2.0 * 0.292f64.powi(2) / 1.5 * 0.28 * 0.26 * 185.0 / 188.0);
        assert!((eps.re - expect).abs() < 1e-12);
        assert!((eps.re / khz(1.0) - 8.14).abs() < 0.02);
        assert!(eps.im.abs() < 1e-15);
    }

    #[test]
    fn squeezing_rate_trivia() {
        let dev = fig2_device();
        let dr = DriveParams::symmetric(0.0, 0.26, mhz(1.5), 0.0, 0.0, DEFAULT_DELTA21);
        assert_eq!(squeezing_rate(&dev, &dr).unwrap(), C64::new(0.0, 0.0));
        let d0 = DriveParams::symmetric(0.2, 0.26, mhz(1.5), 0.0, 0.0, DEFAULT_DELTA21);
        let dpi = DriveParams { phi: std::f64::consts::PI, ..d0 };
        let e0 = squeezing_rate(&dev, &d0).unwrap();
        let epi = squeezing_rate(&dev, &dpi).unwrap();
        assert!((e0 + epi).norm() < 1e-15);
        let bad = DriveParams { delta_a: 0.0, ..d0 };
        assert!(matches!(squeezing_rate(&dev, &bad), Err(Error::SingularParameter(_))));
    }

    #[test]
    fn squeezing_rate_unit_round_trip() {
        // Same number whether the inputs start as MHz or as rad/μs.
        let dev = fig2_device();
        let dr = DriveParams::symmetric(0.28, 0.26, mhz(1.5), 0.0, 0.0, DEFAULT_DELTA21);
        let e1 = squeezing_rate(&dev, &dr).unwrap();
        let dev2 = DeviceParams { g: 1.834690109, alpha: 1162.389282, ..dev };
        let dr2 = DriveParams { delta_a: 9.424777961, delta1: 9.424777961 - 94.24777961, delta2: 9.424777961 + 94.24777961, ..dr };
        let e2 = squeezing_rate(&dev2, &dr2).unwrap();
        assert!((e1 - e2).norm() < 1e-9 * e1.norm());
    }

    #[test]
    fn kerr_perturbative_examples() {
        let g = mhz(0.292);
        let k = kerr_perturbative(g, 10.0 * g, mhz(185.0)).unwrap();
        assert!((k / khz(0.292) - 1.0).abs() < 1e-3);
        let lead = g.powi(4) / (10.0 * g).powi(3);
        let big = kerr_perturbative(g, 10.0 * g, 1e12).unwrap();
        assert!((big / lead - 1.0).abs() < 1e-12);
        assert_eq!(kerr_perturbative(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(kerr_perturbative(g, 0.0, 1.0).is_err());
    }

    #[test]
    fn kerr_exact_zero_coupling() {
        let dev = DeviceParams { g: 0.0, ..fig2_device() };
        let dims = HilbertDims::new(4, 8).unwrap();
        assert_eq!(kerr_exact(&dev, mhz(1.5), dims).unwrap(), 0.0);
    }

    #[test]
    fn kerr_exact_approaches_fourth_order() {
        // Oracle: the closed-form fourth-order coefficient. Deep in the
        // dispersive regime the ratio converges to 1.
        let dev = fig2_device();
        let dims = HilbertDims::new(4, 8).unwrap();
        let mut prev = 0.0;
        for m in [10.0, 20.0, 40.0] {
            let da = m * dev.g;
            let ex = kerr_exact(&dev, da, dims).unwrap();
            let r = ex / kerr_fourth_order(dev.g, da, dev.alpha).unwrap();
            assert!((r - 1.0).abs() < 0.07, "ratio {r} at {m}g");
            assert!(r > prev);
            prev = r;
        }
        assert!((prev - 1.0).abs() < 0.01);
    }

    #[test]
    fn kerr_exact_needs_three_levels() {
        let dev = fig2_device();
        assert!(kerr_exact(&dev, mhz(1.5), HilbertDims::new(2, 8).unwrap()).is_err());
        assert!(kerr_exact(&dev, mhz(1.5), HilbertDims::new(3, 5).unwrap()).is_err());
    }

    #[test]
    fn effective_detuning() {
        let dev = fig2_device();
        let da = mhz(1.5);
        let shift = dev.g * dev.g / da;
        // resonance: ω₁ + ω₂ = 2ω_a′
        let delta = resonant_correction(dev.g, da).unwrap();
        let dr = DriveParams::symmetric(0.1, 0.1, da, delta, 0.0, DEFAULT_DELTA21);
        let eff = effective_params(&dev, &dr, KerrMethod::Perturbative).unwrap();
        assert!(eff.detuning.abs() < 1e-9);
        // ω₁ + ω₂ = 2ω_a + δ  ->  |Δ| = |g²/Δ_a − δ/2|
        let d = mhz(0.05);
        let dr = DriveParams::symmetric(0.1, 0.1, da, d, 0.0, DEFAULT_DELTA21);
        let eff = effective_params(&dev, &dr, KerrMethod::Perturbative).unwrap();
        assert!((eff.detuning.abs() - (shift - d / 2.0).abs()).abs() < 1e-9);
        assert!((eff.omega_a_shifted - dev.omega_a - shift).abs() < 1e-9);
        let dev0 = DeviceParams { g: 0.0, ..dev };
        let eff0 = effective_params(&dev0, &dr, KerrMethod::Perturbative).unwrap();
        assert_eq!(eff0.omega_a_shifted, dev0.omega_a);
    }

    #[test]
    fn inherited_dephasing_limits() {
        let dev = fig2_device();
        assert!(inherited_dephasing(0.0, &dev, mhz(1.5)).unwrap().abs() < 1e-12);
        // χ/γ = 50
        let gamma = dev.gamma_qubit();
        let da = 2.0 * dev.g * dev.g / (50.0 * gamma);
        let gp = inherited_dephasing(0.1, &dev, da).unwrap();
        assert!((gp / (0.1 * gamma) - 1.0).abs() < 0.05, "{}", gp / (0.1 * gamma));
        let mut prev = -1.0;
        for k in 0..=20 {
            let v = inherited_dephasing(k as f64 * 0.05, &dev, mhz(1.5)).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn full_hamiltonian_properties() {
        let dev = fig2_device();
        let dims = HilbertDims::new(4, 6).unwrap();
        let none = DriveParams::symmetric(0.0, 0.0, mhz(1.5), 0.0, 0.0, DEFAULT_DELTA21);
        let h0 = build_full_hamiltonian(&dev, &none, dims, 0.0).unwrap();
        let und = undriven_hamiltonian(dev.g, dev.alpha, 0.0, dims).unwrap();
        for (x, y) in h0.mat().iter().zip(und.mat().iter()) {
            assert!((x - y).norm() < 1e-12);
        }
        let dr = DriveParams::symmetric(0.28, 0.26, mhz(1.5), 0.7, 0.4, DEFAULT_DELTA21);
        let (o1, o2) = dr.amplitudes();
        let bound = 0.5 * dev.alpha * 16.0 + 2.0 * dev.g * (24f64).sqrt() + 2.0 * (o1 + o2) * 2.0;
        for t in [0.0, 0.013, 0.37, 2.9, 17.3] {
            let h = build_full_hamiltonian(&dev, &dr, dims, t).unwrap();
            assert!(h.is_hermitian(1e-12));
            let e = h.eig().unwrap();
            let nrm = e.values.iter().map(|x| x.abs()).fold(0.0, f64::max);
            assert!(nrm <= bound);
        }
        assert!(build_full_hamiltonian(&dev, &dr, HilbertDims::new(2, 6).unwrap(), 0.0).is_err());
        assert!(full_hamiltonian_allow_two_level(&dev, &dr, HilbertDims::new(2, 6).unwrap()).is_ok());
    }

    #[test]
    fn squeezed_kerr_hamiltonian() {
        let zero = EffectiveParams { detuning: 0.0, epsilon: C64::new(0.0, 0.0), kerr: 0.0, omega_a_shifted: 0.0 };
        let h = build_squeezed_kerr_hamiltonian(&zero, 6).unwrap();
        assert!(h.mat().iter().all(|z| z.norm() == 0.0));
        let e = EffectiveParams { epsilon: C64::new(0.3, 0.0), ..zero };
        let h = build_squeezed_kerr_hamiltonian(&e, 6).unwrap();
        assert!((h.mat()[[2, 0]] - C64::new(-2f64.sqrt() * 0.3, 0.0)).norm() < 1e-15);
        let k = EffectiveParams { kerr: 0.7, ..zero };
        let h = build_squeezed_kerr_hamiltonian(&k, 6).unwrap();
        for l in 0..6 {
            assert!((h.mat()[[l, l]].re + 0.7 * (l * l.saturating_sub(1)) as f64).abs() < 1e-12);
        }
        assert!(build_squeezed_kerr_hamiltonian(&zero, 3).is_err());
    }
}
