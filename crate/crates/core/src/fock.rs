//! Truncated Fock-space operators and states.
//!
//! Composite spaces are always ordered qubit ⊗ phonon: basis index
//! `i = q * phonon_levels + n`.

use std::ops::{Add, Mul, Sub};

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::numerics::{expm, hermitian_eig, HermitianEig};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertDims {
    pub qubit_levels: usize,
    pub phonon_levels: usize,
}

impl HilbertDims {
    pub fn new(qubit_levels: usize, phonon_levels: usize) -> Result<Self> {
        if qubit_levels < 1 {
            return Err(Error::InvalidDimension("qubit_levels must be positive".into()));
        }
        if phonon_levels < 2 {
            return Err(Error::InvalidDimension(format!("phonon_levels = {phonon_levels} < 2")));
        }
        Ok(Self { qubit_levels, phonon_levels })
    }

    pub fn total(&self) -> usize {
        self.qubit_levels * self.phonon_levels
    }

    /// Two-photon qubit terms (q†²) vanish identically on fewer than three levels.
    pub fn require_two_photon(&self) -> Result<()> {
        if self.qubit_levels < 3 {
            return Err(Error::InvalidDimension(format!(
                "qubit_levels = {} cannot represent two-excitation processes (need >= 3)",
                self.qubit_levels
            )));
        }
        Ok(())
    }

    pub fn index(&self, q: usize, n: usize) -> usize {
        q * self.phonon_levels + n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dims {
    Single(usize),
    Composite(HilbertDims),
}

impl Dims {
    pub fn size(&self) -> usize {
        match self {
            Dims::Single(d) => *d,
            Dims::Composite(h) => h.total(),
        }
    }
}

impl From<HilbertDims> for Dims {
    fn from(h: HilbertDims) -> Self {
        Dims::Composite(h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    dims: Dims,
    mat: Array2<C64>,
}

impl Operator {
    pub fn new(dims: Dims, mat: Array2<C64>) -> Result<Self> {
        let n = dims.size();
        if mat.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mat.nrows() });
        }
        if mat.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: mat.ncols() });
        }
        Ok(Self { dims, mat })
    }

    /// Single-mode operator from a square matrix.
    pub fn from_matrix(mat: Array2<C64>) -> Result<Self> {
        Self::new(Dims::Single(mat.nrows()), mat)
    }

    pub fn identity(dims: Dims) -> Self {
        Self { dims, mat: Array2::eye(dims.size()) }
    }

    pub fn zeros(dims: Dims) -> Self {
        let n = dims.size();
        Self { dims, mat: Array2::zeros((n, n)) }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn size(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> Array2<C64> {
        self.mat
    }

    pub fn dagger(&self) -> Self {
        Self { dims: self.dims, mat: self.mat.t().mapv(|z| z.conj()) }
    }

    pub fn dot(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Self { dims: self.dims, mat: self.mat.dot(&other.mat) })
    }

    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        Ok(&self.dot(other)? - &other.dot(self)?)
    }

    pub fn scale(&self, c: C64) -> Self {
        Self { dims: self.dims, mat: self.mat.mapv(|z| z * c) }
    }

    /// Largest elementwise |M − M†|.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.size();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[[i, j]] - self.mat[[j, i]].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn eig(&self) -> Result<HermitianEig> {
        hermitian_eig(&self.mat)
    }

    pub fn apply(&self, psi: &Array1<C64>) -> Array1<C64> {
        self.mat.dot(psi)
    }

    fn check_same(&self, other: &Operator) -> Result<()> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), got: other.size() });
        }
        Ok(())
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.size(), rhs.size(), "operator dimension mismatch");
        Operator { dims: self.dims, mat: &self.mat + &rhs.mat }
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.size(), rhs.size(), "operator dimension mismatch");
        Operator { dims: self.dims, mat: &self.mat - &rhs.mat }
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.size(), rhs.size(), "operator dimension mismatch");
        Operator { dims: self.dims, mat: self.mat.dot(&rhs.mat) }
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;
    fn mul(self, c: C64) -> Operator {
        self.scale(c)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, c: f64) -> Operator {
        self.scale(C64::new(c, 0.0))
    }
}

fn check_mode_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidDimension(format!("mode dimension {dim} < 2")));
    }
    Ok(())
}

pub fn annihilation(dim: usize) -> Result<Operator> {
    check_mode_dim(dim)?;
    let mut m = Array2::zeros((dim, dim));
    for n in 1..dim {
        m[[n - 1, n]] = C64::new((n as f64).sqrt(), 0.0);
    }
    Operator::from_matrix(m)
}

pub fn creation(dim: usize) -> Result<Operator> {
    Ok(annihilation(dim)?.dagger())
}

pub fn number(dim: usize) -> Result<Operator> {
    check_mode_dim(dim)?;
    let diag = Array1::from_iter((0..dim).map(|n| C64::new(n as f64, 0.0)));
    Operator::from_matrix(Array2::from_diag(&diag))
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(Dims::Single(dim))
}

pub fn parity(dim: usize) -> Result<Operator> {
    if dim < 1 {
        return Err(Error::InvalidDimension("parity needs dim >= 1".into()));
    }
    let diag = Array1::from_iter((0..dim).map(|n| if n % 2 == 0 { ONE } else { -ONE }));
    Operator::from_matrix(Array2::from_diag(&diag))
}

/// X = (a + a†)/√2.
pub fn quadrature_x(dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    Ok(&(&a + &a.dagger()) * std::f64::consts::FRAC_1_SQRT_2)
}

/// P = (a − a†)/(i√2).
pub fn quadrature_p(dim: usize) -> Result<Operator> {
    let a = annihilation(dim)?;
    Ok((&a - &a.dagger()).scale(C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2)))
}

/// X cos θ + P sin θ.
pub fn rotated_quadrature(theta: f64, dim: usize) -> Result<Operator> {
    Ok(&(&quadrature_x(dim)? * theta.cos()) + &(&quadrature_p(dim)? * theta.sin()))
}

/// Kronecker product `A ⊗ B`. Two single-mode factors produce a composite
/// qubit ⊗ phonon operator.
pub fn tensor(a: &Operator, b: &Operator) -> Operator {
    let (na, nb) = (a.size(), b.size());
    let mut m = Array2::zeros((na * nb, na * nb));
    for i in 0..na {
        for j in 0..na {
            let aij = a.mat[[i, j]];
            if aij == ZERO {
                continue;
            }
            m.slice_mut(s![i * nb..(i + 1) * nb, j * nb..(j + 1) * nb])
                .assign(&b.mat.mapv(|z| z * aij));
        }
    }
    let dims = match (a.dims, b.dims) {
        (Dims::Single(q), Dims::Single(p)) if p >= 2 => Dims::Composite(HilbertDims { qubit_levels: q, phonon_levels: p }),
        _ => Dims::Single(na * nb),
    };
    Operator { dims, mat: m }
}

/// `op ⊗ I_phonon`.
pub fn on_qubit(op: &Operator, dims: HilbertDims) -> Result<Operator> {
    if op.size() != dims.qubit_levels {
        return Err(Error::DimensionMismatch { expected: dims.qubit_levels, got: op.size() });
    }
    Ok(tensor(op, &identity(dims.phonon_levels)))
}

/// `I_qubit ⊗ op`.
pub fn on_phonon(op: &Operator, dims: HilbertDims) -> Result<Operator> {
    if op.size() != dims.phonon_levels {
        return Err(Error::DimensionMismatch { expected: dims.phonon_levels, got: op.size() });
    }
    let id = Operator::identity(Dims::Single(dims.qubit_levels));
    let mut t = tensor(&id, op);
    t.dims = Dims::Composite(dims);
    Ok(t)
}

/// D(α) = exp(α a† − α* a), by matrix exponential in the truncated space.
/// Logs a warning when |α|² > dim/4, where truncation error becomes visible.
pub fn displacement(alpha: C64, dim: usize) -> Result<Operator> {
    check_mode_dim(dim)?;
    if alpha.norm_sqr() > dim as f64 / 4.0 {
        log::warn!("displacement |alpha|^2 = {:.3} exceeds dim/4 = {:.2}; truncation error likely", alpha.norm_sqr(), dim as f64 / 4.0);
    }
    let a = annihilation(dim)?;
    let gen = &(&a.dagger() * alpha) - &(&a * alpha.conj());
    Operator::from_matrix(expm(gen.mat()))
}

/// exp(½(ξ* a² − ξ a†²)) by matrix exponential in the truncated space.
pub fn squeeze_operator(xi: C64, dim: usize) -> Result<Operator> {
    check_mode_dim(dim)?;
    let a = annihilation(dim)?;
    let a2 = &a * &a;
    let ad2 = a2.dagger();
    let gen = &(&a2 * (0.5 * xi.conj())) - &(&ad2 * (0.5 * xi));
    Operator::from_matrix(expm(gen.mat()))
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Generalized Laguerre polynomial L_n^{(k)}(x) by upward recurrence.
pub fn laguerre(n: usize, k: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + k - x;
    for j in 1..n {
        let jf = j as f64;
        let l2 = ((2.0 * jf + 1.0 + k - x) * l1 - (jf + k) * l0) / (jf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// Matrix elements of the displaced parity D(α) P D(α)† in the Fock basis,
/// evaluated in closed form. Unlike the product of truncated matrices, every
/// entry is exact regardless of `dim`.
pub fn displaced_parity(alpha: C64, dim: usize) -> Array2<C64> {
    let mut m = Array2::zeros((dim, dim));
    let r = alpha.norm();
    let x = 4.0 * r * r;
    let lf = ln_factorials(dim);
    let phase = if r > 0.0 { alpha / r } else { ONE };
    for n in 0..dim {
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        for mm in n..dim {
            let k = mm - n;
            let val = if r == 0.0 {
                if k == 0 {
                    C64::new(sign, 0.0)
                } else {
                    ZERO
                }
            } else {
                let lmag = -2.0 * r * r + k as f64 * (2.0 * r).ln() + 0.5 * (lf[n] - lf[mm]);
                let mag = sign * lmag.exp() * laguerre(n, k as f64, x);
                phase.powu(k as u32) * mag
            };
            m[[mm, n]] = val;
            m[[n, mm]] = val.conj();
        }
    }
    m
}

pub fn fock_ket(n: usize, dim: usize) -> Result<Array1<C64>> {
    if n >= dim {
        return Err(Error::InvalidDimension(format!("Fock state |{n}> needs dim > {n}")));
    }
    let mut v = Array1::zeros(dim);
    v[n] = ONE;
    Ok(v)
}

fn normalize(mut v: Array1<C64>) -> Array1<C64> {
    let nrm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv_inplace(|z| z / nrm);
    v
}

/// Coherent state from the Fock expansion, renormalized after truncation.
pub fn coherent_ket(alpha: C64, dim: usize) -> Array1<C64> {
    let mut v = Array1::zeros(dim);
    let mut c = C64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for n in 0..dim {
        v[n] = c;
        c = c * alpha / ((n + 1) as f64).sqrt();
    }
    normalize(v)
}

/// S(ξ)|0⟩ with ξ = r e^{iφ}; the quadrature along φ/2 is squeezed to
/// e^{−2r}/2. Renormalized after truncation.
pub fn squeezed_vacuum_ket(r: f64, phi: f64, dim: usize) -> Array1<C64> {
    let mut v = Array1::zeros(dim);
    let t = -C64::from_polar(r.tanh(), phi);
    let mut c = C64::new(1.0 / r.cosh().sqrt(), 0.0);
    let mut n = 0;
    while 2 * n < dim {
        v[2 * n] = c;
        // ratio of √((2n)!)/(2^n n!) between n+1 and n: √((2n+1)(2n+2))/(2(n+1))
        let nf = n as f64;
        c = c * t * (((2.0 * nf + 1.0) * (2.0 * nf + 2.0)).sqrt() / (2.0 * (nf + 1.0)));
        n += 1;
    }
    normalize(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dims: Dims,
    mat: Array2<C64>,
}

impl DensityMatrix {
    pub const HERMITIAN_TOL: f64 = 1e-10;
    pub const TRACE_TOL: f64 = 1e-8;
    pub const EIGEN_TOL: f64 = 1e-8;

    /// Validates the three density-matrix invariants.
    pub fn new(dims: Dims, mat: Array2<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(dims, mat)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Shape check only.
    pub fn new_unchecked(dims: Dims, mat: Array2<C64>) -> Result<Self> {
        let op = Operator::new(dims, mat)?;
        Ok(Self { dims, mat: op.mat })
    }

    pub fn from_ket(dims: Dims, psi: &Array1<C64>) -> Result<Self> {
        if psi.len() != dims.size() {
            return Err(Error::DimensionMismatch { expected: dims.size(), got: psi.len() });
        }
        let psi = normalize(psi.clone());
        let n = psi.len();
        let mat = Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj());
        Ok(Self { dims, mat })
    }

    pub fn vacuum(dim: usize) -> Self {
        let mut mat = Array2::zeros((dim, dim));
        mat[[0, 0]] = ONE;
        Self { dims: Dims::Single(dim), mat }
    }

    pub fn fock(n: usize, dim: usize) -> Result<Self> {
        Self::from_ket(Dims::Single(dim), &fock_ket(n, dim)?)
    }

    pub fn coherent(alpha: C64, dim: usize) -> Self {
        Self::from_ket(Dims::Single(dim), &coherent_ket(alpha, dim)).expect("consistent dims")
    }

    pub fn squeezed_vacuum(r: f64, phi: f64, dim: usize) -> Self {
        Self::from_ket(Dims::Single(dim), &squeezed_vacuum_ket(r, phi, dim)).expect("consistent dims")
    }

    /// Thermal state with mean occupation `n_th`, renormalized after truncation.
    pub fn thermal(n_th: f64, dim: usize) -> Result<Self> {
        if !(n_th >= 0.0) {
            return Err(Error::InvalidParameter(format!("thermal occupation {n_th} < 0")));
        }
        let mut mat = Array2::zeros((dim, dim));
        if n_th == 0.0 {
            mat[[0, 0]] = ONE;
        } else {
            let ratio = n_th / (1.0 + n_th);
            let mut p = 1.0;
            for k in 0..dim {
                mat[[k, k]] = C64::new(p, 0.0);
                p *= ratio;
            }
            let tr: f64 = (0..dim).map(|k| mat[[k, k]].re).sum();
            mat.mapv_inplace(|z| z / tr);
        }
        Ok(Self { dims: Dims::Single(dim), mat })
    }

    /// S(ξ) ρ_th S(ξ)† built in a padded space and truncated back to `dim`.
    pub fn squeezed_thermal(n_th: f64, r: f64, phi: f64, dim: usize) -> Result<Self> {
        let pad = dim + 40 + (20.0 * r.abs() * r.abs().max(1.0)) as usize;
        let th = Self::thermal(n_th, pad)?;
        let s = squeeze_operator(C64::from_polar(r, phi), pad)?;
        let big = s.mat().dot(&th.mat).dot(&s.dagger().mat);
        let mut mat = big.slice(s![..dim, ..dim]).to_owned();
        let tr: f64 = mat.diag().iter().map(|z| z.re).sum();
        mat.mapv_inplace(|z| z / tr);
        Ok(Self { dims: Dims::Single(dim), mat }.hermitized())
    }

    /// Product state ρ_q ⊗ ρ_a.
    pub fn product(qubit: &DensityMatrix, phonon: &DensityMatrix) -> Result<Self> {
        let dims = HilbertDims::new(qubit.size(), phonon.size())?;
        let a = Operator { dims: qubit.dims, mat: qubit.mat.clone() };
        let b = Operator { dims: phonon.dims, mat: phonon.mat.clone() };
        Ok(Self { dims: Dims::Composite(dims), mat: tensor(&a, &b).mat })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn size(&self) -> usize {
        self.mat.nrows()
    }

    pub fn mat(&self) -> &Array2<C64> {
        &self.mat
    }

    pub fn into_mat(self) -> Array2<C64> {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.diag().sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ |ρ_ij|² for Hermitian ρ
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.mat.diag().iter().map(|z| z.re).collect()
    }

    pub fn hermitized(mut self) -> Self {
        let h = (&self.mat + &self.mat.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        self.mat = h;
        self
    }

    pub fn eig(&self) -> Result<HermitianEig> {
        hermitian_eig(&self.mat)
    }

    pub fn validate(&self) -> Result<()> {
        let op = Operator { dims: self.dims, mat: self.mat.clone() };
        let herm = op.hermiticity_defect();
        if herm > Self::HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {:.12} != 1", tr.re)));
        }
        let e = hermitian_eig(&self.hermitized_copy())?;
        if e.values[0] < -Self::EIGEN_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", e.values[0])));
        }
        Ok(())
    }

    fn hermitized_copy(&self) -> Array2<C64> {
        (&self.mat + &self.mat.t().mapv(|z| z.conj())).mapv(|z| z * 0.5)
    }

    fn composite(&self) -> Result<HilbertDims> {
        match self.dims {
            Dims::Composite(h) => Ok(h),
            Dims::Single(_) => Err(Error::InvalidDimension("partial trace needs a composite state".into())),
        }
    }

    /// Traces out the qubit, leaving the phonon state.
    pub fn phonon_state(&self) -> Result<Self> {
        let h = self.composite()?;
        let np = h.phonon_levels;
        let mut out = Array2::zeros((np, np));
        for q in 0..h.qubit_levels {
            out += &self.mat.slice(s![q * np..(q + 1) * np, q * np..(q + 1) * np]);
        }
        Ok(Self { dims: Dims::Single(np), mat: out })
    }

    /// Traces out the phonon, leaving the qubit state.
    pub fn qubit_state(&self) -> Result<Self> {
        let h = self.composite()?;
        let (nq, np) = (h.qubit_levels, h.phonon_levels);
        let out = Array2::from_shape_fn((nq, nq), |(i, j)| (0..np).map(|n| self.mat[[i * np + n, j * np + n]]).sum());
        Ok(Self { dims: Dims::Single(nq), mat: out })
    }

    /// Uhlmann fidelity (Tr √(√ρ σ √ρ))², evaluated on the support of ρ so
    /// that numerically-zero eigenvalues do not leak √ε noise into the trace.
    pub fn fidelity(&self, other: &DensityMatrix) -> Result<f64> {
        if self.size() != other.size() {
            return Err(Error::DimensionMismatch { expected: self.size(), got: other.size() });
        }
        let e = hermitian_eig(&self.hermitized_copy())?;
        let lmax = e.values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > 1e-13 * lmax).collect();
        let n = self.size();
        let vk = Array2::from_shape_fn((n, keep.len()), |(i, c)| e.vectors[[i, keep[c]]] * e.values[keep[c]].sqrt());
        let m = vk.t().mapv(|z| z.conj()).dot(&other.hermitized_copy()).dot(&vk);
        let m = (&m + &m.t().mapv(|z| z.conj())).mapv(|z| z * 0.5);
        let mu = hermitian_eig(&m)?;
        let mu_max = mu.values.iter().cloned().fold(0.0, f64::max);
        let s: f64 = mu.values.iter().filter(|&&l| l > 1e-13 * mu_max).map(|l| l.sqrt()).sum();
        Ok(s * s)
    }

    /// Copy into a larger or smaller single-mode space (zero padding or
    /// truncation followed by renormalization).
    pub fn resized(&self, dim: usize) -> Result<Self> {
        if !matches!(self.dims, Dims::Single(_)) {
            return Err(Error::InvalidDimension("resize applies to single-mode states".into()));
        }
        let k = dim.min(self.size());
        let mut mat = Array2::zeros((dim, dim));
        mat.slice_mut(s![..k, ..k]).assign(&self.mat.slice(s![..k, ..k]));
        let tr: f64 = mat.diag().iter().map(|z| z.re).sum();
        if !(tr > 0.0) {
            return Err(Error::InvalidState("no weight left after truncation".into()));
        }
        mat.mapv_inplace(|z| z / tr);
        Ok(Self { dims: Dims::Single(dim), mat })
    }
}

/// Tr(ρ·op).
pub fn expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64> {
    let n = rho.size();
    if op.size() != n {
        return Err(Error::DimensionMismatch { expected: n, got: op.size() });
    }
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += rho.mat[[i, j]] * op.mat[[j, i]];
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn annihilation_entries() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.mat()[[0, 1]], ONE);
        assert_eq!(a.mat().iter().filter(|z| **z != ZERO).count(), 1);
        let a3 = annihilation(3).unwrap();
        assert_eq!(a3.mat()[[0, 1]], ONE);
        assert_eq!(a3.mat()[[1, 2]], C64::new(2f64.sqrt(), 0.0));
        assert!(annihilation(1).is_err());
    }

    #[test]
    fn number_diagonal() {
        let a = annihilation(4).unwrap();
        let n = &a.dagger() * &a;
        for k in 0..4 {
            assert!(close(n.mat()[[k, k]], C64::new(k as f64, 0.0), 1e-15));
        }
    }

    #[test]
    fn tensor_identities() {
        let i2 = identity(2);
        let i3 = identity(3);
        let t = tensor(&i2, &i3);
        assert_eq!(t.mat(), &Array2::<C64>::eye(6));
        let dims = HilbertDims::new(3, 15).unwrap();
        let q = on_qubit(&annihilation(3).unwrap(), dims).unwrap();
        let a = on_phonon(&annihilation(15).unwrap(), dims).unwrap();
        assert_eq!(q.size(), 45);
        assert_eq!(&q * &a, &a * &q);
        assert_eq!(a.dims(), Dims::Composite(dims));
    }

    #[test]
    fn tensor_index_convention() {
        // (q† ⊗ I)|0,n⟩ = |1,n⟩ at index phonon_levels + n
        let dims = HilbertDims::new(3, 5).unwrap();
        let qd = on_qubit(&creation(3).unwrap(), dims).unwrap();
        let mut psi = Array1::zeros(15);
        psi[dims.index(0, 2)] = ONE;
        let out = qd.apply(&psi);
        assert!(close(out[dims.index(1, 2)], ONE, 1e-15));
    }

    #[test]
    fn displacement_properties() {
        assert!(displacement(ZERO, 10).unwrap().mat().iter().zip(Array2::<C64>::eye(10).iter()).all(|(a, b)| close(*a, *b, 1e-15)));
        let al = C64::new(1.2, 0.3);
        let d = displacement(al, 30).unwrap();
        let dm = displacement(-al, 30).unwrap();
        let p = &d * &dm;
        for (x, y) in p.mat().iter().zip(Array2::<C64>::eye(30).iter()) {
            assert!(close(*x, *y, 1e-8));
        }
    }

    #[test]
    fn coherent_occupation_from_displacement() {
        // Oracle: explicit Fock series of the coherent state.
        let d = displacement(ONE, 30).unwrap();
        let psi = d.apply(&fock_ket(0, 30).unwrap());
        let series = coherent_ket(ONE, 30);
        for (x, y) in psi.iter().zip(series.iter()) {
            assert!(close(*x, *y, 1e-9));
        }
        let rho = DensityMatrix::from_ket(Dims::Single(30), &psi).unwrap();
        let n = expectation(&rho, &number(30).unwrap()).unwrap();
        assert!((n.re - 1.0).abs() < 1e-6);
    }

    #[test]
    fn parity_basics() {
        let p = parity(2).unwrap();
        assert_eq!(p.mat()[[1, 1]], -ONE);
        let p5 = parity(5).unwrap();
        assert_eq!(&p5 * &p5, identity(5));
        let vac = DensityMatrix::vacuum(5);
        assert_eq!(expectation(&vac, &p5).unwrap(), ONE);
    }

    #[test]
    fn expectation_examples() {
        let vac = DensityMatrix::vacuum(8);
        assert!(close(expectation(&vac, &number(8).unwrap()).unwrap(), ZERO, 1e-15));
        let x = quadrature_x(8).unwrap();
        let x2 = &x * &x;
        assert!(close(expectation(&vac, &x2).unwrap(), C64::new(0.5, 0.0), 1e-15));
        let f2 = DensityMatrix::fock(2, 8).unwrap();
        assert!(close(expectation(&f2, &number(8).unwrap()).unwrap(), C64::new(2.0, 0.0), 1e-15));
        assert!(expectation(&f2, &number(7).unwrap()).is_err());
    }

    #[test]
    fn squeezed_vacuum_variances() {
        let r = 0.4;
        let dim = 60;
        let rho = DensityMatrix::squeezed_vacuum(r, 0.0, dim);
        let x = quadrature_x(dim).unwrap();
        let p = quadrature_p(dim).unwrap();
        let vx = expectation(&rho, &(&x * &x)).unwrap().re;
        let vp = expectation(&rho, &(&p * &p)).unwrap().re;
        assert!((vx - 0.5 * (-2.0 * r).exp()).abs() < 1e-10);
        assert!((vp - 0.5 * (2.0 * r).exp()).abs() < 1e-10);
        // agrees with the operator definition
        let s = squeeze_operator(C64::new(r, 0.0), 120).unwrap();
        let psi = s.apply(&fock_ket(0, 120).unwrap());
        let ket = squeezed_vacuum_ket(r, 0.0, 120);
        for k in 0..40 {
            assert!(close(psi[k], ket[k], 1e-10));
        }
    }

    #[test]
    fn squeezed_thermal_variance() {
        let (n_th, r) = (0.3, 0.5);
        let rho = DensityMatrix::squeezed_thermal(n_th, r, 0.0, 50).unwrap();
        rho.validate().unwrap();
        let x = quadrature_x(50).unwrap();
        let vx = expectation(&rho, &(&x * &x)).unwrap().re;
        assert!((vx - (n_th + 0.5) * (-2.0 * r).exp()).abs() < 1e-8);
    }

    #[test]
    fn displaced_parity_matches_operator_product() {
        // Oracle: D(α) P D(α)† built from matrix exponentials in a much larger space.
        let big = 120;
        let small = 20;
        for al in [C64::new(0.0, 0.0), C64::new(0.7, -0.4), C64::new(-1.5, 1.1)] {
            let d = displacement(al, big).unwrap();
            let pi_big = &(&d * &parity(big).unwrap()) * &d.dagger();
            let closed = displaced_parity(al, small);
            for i in 0..small {
                for j in 0..small {
                    assert!(close(closed[[i, j]], pi_big.mat()[[i, j]], 1e-10), "alpha={al} ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn partial_traces() {
        let q = DensityMatrix::fock(1, 3).unwrap();
        let a = DensityMatrix::coherent(C64::new(0.5, 0.2), 10);
        let prod = DensityMatrix::product(&q, &a).unwrap();
        let back_a = prod.phonon_state().unwrap();
        let back_q = prod.qubit_state().unwrap();
        for (x, y) in back_a.mat().iter().zip(a.mat().iter()) {
            assert!(close(*x, *y, 1e-15));
        }
        for (x, y) in back_q.mat().iter().zip(q.mat().iter()) {
            assert!(close(*x, *y, 1e-15));
        }
    }

    #[test]
    fn fidelity_values() {
        let a = DensityMatrix::coherent(C64::new(0.6, 0.0), 20);
        assert!((a.fidelity(&a).unwrap() - 1.0).abs() < 1e-8);
        let vac = DensityMatrix::vacuum(20);
        // |⟨0|α⟩|² = e^{−|α|²}
        assert!((vac.fidelity(&a).unwrap() - (-0.36f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn validate_rejects_bad_states() {
        let mut m = Array2::<C64>::eye(2);
        assert!(DensityMatrix::new(Dims::Single(2), m.clone()).is_err());
        m[[1, 1]] = ZERO;
        assert!(DensityMatrix::new(Dims::Single(2), m.clone()).is_ok());
        let mut neg = Array2::<C64>::zeros((2, 2));
        neg[[0, 0]] = C64::new(1.1, 0.0);
        neg[[1, 1]] = C64::new(-0.1, 0.0);
        assert!(DensityMatrix::new(Dims::Single(2), neg).is_err());
    }

    #[test]
    fn two_photon_guard() {
        assert!(HilbertDims::new(2, 10).unwrap().require_two_photon().is_err());
        assert!(HilbertDims::new(3, 10).unwrap().require_two_photon().is_ok());
        assert!(HilbertDims::new(3, 1).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn mixture(a: &DensityMatrix, b: &DensityMatrix, w: f64) -> DensityMatrix {
        let m = &a.mat().mapv(|z| z * w) + &b.mat().mapv(|z| z * (1.0 - w));
        DensityMatrix::new(a.dims(), m).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn commutator_truncation_law(dim in 2usize..48) {
            let a = annihilation(dim).unwrap();
            let c = a.commutator(&a.dagger()).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    let want = match (i == j, i + 1 == dim) {
                        (false, _) => ZERO,
                        (true, false) => ONE,
                        (true, true) => C64::new(1.0 - dim as f64, 0.0),
                    };
                    // entries are products of rounded √n, so equality is to a few ulps
                    prop_assert!((c.mat()[[i, j]] - want).norm() <= 4.0 * f64::EPSILON * dim as f64);
                }
            }
        }

        #[test]
        fn creation_is_adjoint_and_parity_anticommutes(dim in 2usize..48) {
            let a = annihilation(dim).unwrap();
            let ad = creation(dim).unwrap();
            prop_assert_eq!(ad.mat(), &a.mat().t().mapv(|z| z.conj()));
            let p = parity(dim).unwrap();
            let pa = &p * &a;
            let ap = &a * &p;
            prop_assert!(pa.mat().iter().zip(ap.mat().iter()).all(|(x, y)| *x == -*y));
        }

        #[test]
        fn displacement_is_unitary(re in -2.0f64..2.0, im in -2.0f64..2.0, dim in 20usize..40) {
            let d = displacement(C64::new(re, im), dim).unwrap();
            let u = &d.dagger() * &d;
            let defect = (u.mat() - &identity(dim).into_mat()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            prop_assert!(defect < 1e-10, "defect {defect:e}");
        }

        #[test]
        fn constructed_states_are_valid(
            re in -1.5f64..1.5,
            im in -1.5f64..1.5,
            r in 0.0f64..0.8,
            phi in 0.0f64..6.3,
            n_th in 0.0f64..1.5,
            w in 0.0f64..1.0,
        ) {
            let dim = 40;
            let states = [
                DensityMatrix::coherent(C64::new(re, im), dim),
                DensityMatrix::squeezed_vacuum(r, phi, dim),
                DensityMatrix::thermal(n_th, dim).unwrap(),
                DensityMatrix::squeezed_thermal(n_th, r, phi, dim).unwrap(),
            ];
            for s in &states {
                prop_assert!(s.validate().is_ok());
                prop_assert!(s.purity() <= 1.0 + 1e-10);
            }
            prop_assert!(mixture(&states[0], &states[3], w).validate().is_ok());
            let q = DensityMatrix::thermal(n_th.min(0.5), 3).unwrap();
            prop_assert!(DensityMatrix::product(&q, &states[1]).unwrap().validate().is_ok());
        }
    }
}
