//! Open-system time evolution: Lindblad integration, the linear moment
//! equations for ⟨a⟩, ⟨a†a⟩, ⟨aa⟩, and their closed-form special cases.

use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::fock::{annihilation, expectation, number, on_phonon, on_qubit, DensityMatrix, Dims, HilbertDims, Operator};
use crate::model::{full_hamiltonian, DeviceParams, DriveParams, TimeDependentHamiltonian};
use crate::numerics::{
    curve_fit, expm, ode_solve_with_stats, scan_then_refine_min, Bounds, FitOptions, FitReport, OdeOptions, OdeStats,
};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Debug)]
pub enum HamiltonianSource {
    Constant(Operator),
    Driven(TimeDependentHamiltonian),
}

impl HamiltonianSource {
    pub fn size(&self) -> usize {
        match self {
            HamiltonianSource::Constant(h) => h.size(),
            HamiltonianSource::Driven(h) => h.static_part.size(),
        }
    }

    pub fn at(&self, t: f64) -> Operator {
        match self {
            HamiltonianSource::Constant(h) => h.clone(),
            HamiltonianSource::Driven(h) => h.at(t),
        }
    }
}

/// Hamiltonian plus jump operators `(L, rate)`; the dissipator uses
/// `√rate · L`.
#[derive(Clone, Debug)]
pub struct LindbladSpec {
    pub hamiltonian: HamiltonianSource,
    pub jumps: Vec<(Operator, f64)>,
}

impl LindbladSpec {
    pub fn new(hamiltonian: HamiltonianSource, jumps: Vec<(Operator, f64)>) -> Result<Self> {
        let n = hamiltonian.size();
        for (op, rate) in &jumps {
            if op.size() != n {
                return Err(Error::DimensionMismatch { expected: n, got: op.size() });
            }
            if !(*rate >= 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParameter(format!("jump rate {rate} must be finite and non-negative")));
            }
        }
        if let HamiltonianSource::Driven(h) = &hamiltonian {
            for term in &h.terms {
                if term.op.size() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: term.op.size() });
                }
            }
        }
        Ok(Self { hamiltonian, jumps })
    }

    pub fn constant(h: Operator, jumps: Vec<(Operator, f64)>) -> Result<Self> {
        Self::new(HamiltonianSource::Constant(h), jumps)
    }
}

#[derive(Clone, Debug)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Optional extra step ceiling (μs). Driven Hamiltonians always get
    /// `1/(20·max|Δ_j|)`.
    pub max_step: Option<f64>,
    /// Validate every output state (trace drift, Hermiticity, positivity).
    pub check_invariants: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10, max_step: None, check_invariants: true }
    }
}

/// Row-sorted coordinate list of the nonzero entries of an operator.
#[derive(Clone, Debug)]
struct SparseOp {
    entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    fn from_dense(m: &Array2<C64>) -> Self {
        let mut entries = Vec::new();
        for ((i, j), v) in m.indexed_iter() {
            if *v != ZERO {
                entries.push((i, j, *v));
            }
        }
        Self { entries }
    }

    /// `out += c · S · x` for a vector.
    fn vec_mul_acc(&self, c: C64, x: &Array1<C64>, out: &mut Array1<C64>) {
        for &(i, k, v) in &self.entries {
            out[i] += c * v * x[k];
        }
    }

    /// `out += c · S · x`
    fn left_mul_acc(&self, c: C64, x: &Array2<C64>, out: &mut Array2<C64>) {
        for &(i, k, v) in &self.entries {
            let f = c * v;
            let src = x.row(k);
            let mut dst = out.row_mut(i);
            dst.zip_mut_with(&src, |d, s| *d += f * s);
        }
    }
}

/// Effective Hamiltonian H(t) − (i/2)ΣL†L on a merged sparsity pattern:
/// static values plus per-term contributions scaled by c_k(t) or c_k(t)*.
struct MergedHamiltonian {
    rows: Vec<usize>,
    cols: Vec<usize>,
    base: Vec<C64>,
    /// (entry, term, conjugate?, value)
    parts: Vec<(usize, usize, bool, C64)>,
    coeffs: Vec<(C64, f64)>,
    vals: Vec<C64>,
}

impl MergedHamiltonian {
    fn new(heff: &Array2<C64>, terms: &[crate::model::DriveTerm]) -> Self {
        let mut index = std::collections::BTreeMap::new();
        let mut base = Vec::new();
        let mut slot = |i: usize, j: usize, base: &mut Vec<C64>| -> usize {
            *index.entry((i, j)).or_insert_with(|| {
                base.push(ZERO);
                base.len() - 1
            })
        };
        for ((i, j), v) in heff.indexed_iter() {
            if *v != ZERO {
                let e = slot(i, j, &mut base);
                base[e] += *v;
            }
        }
        let mut parts = Vec::new();
        for (k, t) in terms.iter().enumerate() {
            for ((i, j), v) in t.op.mat().indexed_iter() {
                if *v != ZERO {
                    parts.push((slot(i, j, &mut base), k, false, *v));
                    parts.push((slot(j, i, &mut base), k, true, v.conj()));
                }
            }
        }
        let (rows, cols) = {
            let mut keys = vec![(0, 0); base.len()];
            for (&(i, j), &e) in &index {
                keys[e] = (i, j);
            }
            keys.into_iter().unzip()
        };
        let coeffs = terms.iter().map(|t| (t.amp, t.freq)).collect();
        let vals = base.clone();
        Self { rows, cols, base, parts, coeffs, vals }
    }

    /// `out = H_eff(t) · x` for row-major n×n slices.
    fn apply(&mut self, t: f64, x: &[C64], out: &mut [C64], n: usize) {
        self.vals.copy_from_slice(&self.base);
        let c: Vec<C64> = self.coeffs.iter().map(|(a, f)| a * C64::from_polar(1.0, f * t)).collect();
        for &(e, k, conj, v) in &self.parts {
            self.vals[e] += if conj { c[k].conj() } else { c[k] } * v;
        }
        out.fill(ZERO);
        for e in 0..self.vals.len() {
            let h = self.vals[e];
            let (i, k) = (self.rows[e], self.cols[e]);
            let src = &x[k * n..(k + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += h * s;
            }
        }
    }
}

enum Jump {
    /// At most one nonzero per row: row i maps to (column, value).
    Monomial(Vec<Option<(usize, C64)>>),
    General(SparseOp),
}

impl Jump {
    fn new(l: &Array2<C64>) -> Self {
        let mut rows = vec![None; l.nrows()];
        for ((i, j), v) in l.indexed_iter() {
            if *v != ZERO {
                if rows[i].is_some() {
                    return Jump::General(SparseOp::from_dense(l));
                }
                rows[i] = Some((j, *v));
            }
        }
        Jump::Monomial(rows)
    }
}

struct LindbladRhs {
    heff: MergedHamiltonian,
    jumps: Vec<Jump>,
    m: Vec<C64>,
    u: Array2<C64>,
    v: Array2<C64>,
    w: Array2<C64>,
}

impl LindbladRhs {
    fn new(spec: &LindbladSpec) -> Self {
        let n = spec.hamiltonian.size();
        let (h0, terms) = match &spec.hamiltonian {
            HamiltonianSource::Constant(h) => (h.mat().clone(), Vec::new()),
            HamiltonianSource::Driven(h) => (h.static_part.mat().clone(), h.terms.clone()),
        };
        let mut heff = h0;
        let mut jumps = Vec::new();
        for (op, rate) in &spec.jumps {
            if *rate == 0.0 {
                continue;
            }
            let l = op.mat().mapv(|z| z * rate.sqrt());
            let ldl = l.t().mapv(|z| z.conj()).dot(&l);
            heff = heff - ldl.mapv(|z| z * C64::new(0.0, 0.5));
            jumps.push(Jump::new(&l));
        }
        let z = Array2::zeros((n, n));
        Self {
            heff: MergedHamiltonian::new(&heff, &terms),
            jumps,
            m: vec![ZERO; n * n],
            u: z.clone(),
            v: z.clone(),
            w: z,
        }
    }

    fn eval(&mut self, t: f64, rho: &Array2<C64>, out: &mut Array2<C64>) {
        let n = rho.nrows();
        let rho_s = rho.as_slice().expect("standard layout");
        self.heff.apply(t, rho_s, &mut self.m, n);
        let m = &self.m;
        let o = out.as_slice_mut().expect("standard layout");
        let mi = C64::new(0.0, -1.0);
        for i in 0..n {
            for j in 0..n {
                o[i * n + j] = mi * (m[i * n + j] - m[j * n + i].conj());
            }
        }
        for l in &self.jumps {
            match l {
                Jump::Monomial(rows) => {
                    // upper triangle, mirrored, so the result is exactly Hermitian
                    for (i, ri) in rows.iter().enumerate() {
                        let Some((k, li)) = ri else { continue };
                        let src = &rho_s[k * n..(k + 1) * n];
                        o[i * n + i] += li.norm_sqr() * src[*k].re;
                        for (j, rj) in rows.iter().enumerate().skip(i + 1) {
                            if let Some((l, lj)) = rj {
                                let v = li * src[*l] * lj.conj();
                                o[i * n + j] += v;
                                o[j * n + i] += v.conj();
                            }
                        }
                    }
                }
                Jump::General(l) => {
                    self.u.fill(ZERO);
                    l.left_mul_acc(C64::new(1.0, 0.0), rho, &mut self.u);
                    for i in 0..n {
                        for j in 0..n {
                            self.v[[i, j]] = self.u[[j, i]].conj();
                        }
                    }
                    self.w.fill(ZERO);
                    l.left_mul_acc(C64::new(1.0, 0.0), &self.v, &mut self.w);
                    for i in 0..n {
                        for j in 0..n {
                            o[i * n + j] += 0.5 * (self.w[[i, j]] + self.w[[j, i]].conj());
                        }
                    }
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladRun {
    pub states: Vec<DensityMatrix>,
    pub stats: OdeStats,
    /// Largest |Tr ρ(t) − Tr ρ(0)| over the outputs.
    pub max_trace_drift: f64,
}

/// Integrates dρ/dt = −i[H(t), ρ] + Σ(LρL† − ½{L†L, ρ}) on the density
/// matrix directly and returns the state at each point of `t_grid`.
pub fn evolve_lindblad(
    rho0: &DensityMatrix,
    spec: &LindbladSpec,
    t_grid: &[f64],
    ctrl: &StepControl,
) -> Result<Vec<DensityMatrix>> {
    evolve_lindblad_detailed(rho0, spec, t_grid, ctrl).map(|r| r.states)
}

pub fn evolve_lindblad_detailed(
    rho0: &DensityMatrix,
    spec: &LindbladSpec,
    t_grid: &[f64],
    ctrl: &StepControl,
) -> Result<LindbladRun> {
    let n = spec.hamiltonian.size();
    if rho0.size() != n {
        return Err(Error::DimensionMismatch { expected: n, got: rho0.size() });
    }
    rho0.validate()?;
    let mut opts = OdeOptions::with_tolerances(ctrl.rtol, ctrl.atol);
    if let Some(h) = ctrl.max_step {
        opts.max_step = h;
    }
    if let HamiltonianSource::Driven(h) = &spec.hamiltonian {
        let wmax = h.max_frequency();
        if wmax > 0.0 {
            opts.max_step = opts.max_step.min(1.0 / (20.0 * wmax));
        }
    }
    let mut rhs = LindbladRhs::new(spec);
    let (ys, stats) = ode_solve_with_stats(
        |t, y: &Array2<C64>, dy: &mut Array2<C64>| rhs.eval(t, y, dy),
        rho0.mat().clone(),
        t_grid,
        &opts,
    )?;
    let tr0 = rho0.trace().re;
    let mut max_drift: f64 = 0.0;
    let mut states = Vec::with_capacity(ys.len());
    for (k, y) in ys.into_iter().enumerate() {
        let rho = DensityMatrix::new_unchecked(rho0.dims(), y)?;
        let drift = (rho.trace().re - tr0).abs();
        max_drift = max_drift.max(drift);
        if ctrl.check_invariants {
            if drift > 1e-7 {
                return Err(Error::IntegrationFailure {
                    t: t_grid[k],
                    reason: format!("trace drift {drift:.3e} exceeds 1e-7"),
                });
            }
            if let Err(e) = rho.validate() {
                return Err(Error::IntegrationFailure { t: t_grid[k], reason: format!("state invariant violated: {e}") });
            }
        }
        states.push(rho.hermitized());
    }
    Ok(LindbladRun { states, stats, max_trace_drift: max_drift })
}

/// Lindblad model of the driven qubit-phonon device: qubit and phonon
/// relaxation plus pure dephasing at the rates implied by T₁ and T₂.
pub fn full_model_spec(device: &DeviceParams, drives: &DriveParams, dims: HilbertDims) -> Result<LindbladSpec> {
    let h = full_hamiltonian(device, drives, dims)?;
    let q = on_qubit(&annihilation(dims.qubit_levels)?, dims)?;
    let nq = on_qubit(&number(dims.qubit_levels)?, dims)?;
    let a = on_phonon(&annihilation(dims.phonon_levels)?, dims)?;
    let na = on_phonon(&number(dims.phonon_levels)?, dims)?;
    let jumps = vec![
        (q, device.gamma_qubit()),
        (nq, 2.0 * device.gamma_phi_qubit()),
        (a, device.gamma_phonon()),
        (na, 2.0 * device.gamma_phi_phonon()),
    ];
    LindbladSpec::new(HamiltonianSource::Driven(h), jumps)
}

/// Evolves qubit ground ⊗ phonon vacuum under the full model and returns the
/// phonon moments on `t_grid`.
pub fn simulate_full_model(
    device: &DeviceParams,
    drives: &DriveParams,
    dims: HilbertDims,
    t_grid: &[f64],
    ctrl: &StepControl,
) -> Result<MomentTrajectory> {
    let spec = full_model_spec(device, drives, dims)?;
    let rho0 = DensityMatrix::product(&DensityMatrix::vacuum(dims.qubit_levels), &DensityMatrix::vacuum(dims.phonon_levels))?;
    let states = evolve_lindblad(&rho0, &spec, t_grid, ctrl)?;
    MomentTrajectory::from_states(t_grid, &states)
}

/// Integrates i dψ/dt = H(t)ψ. Fails if the norm drifts by more than 1e-7.
pub fn evolve_schrodinger(
    psi0: &Array1<C64>,
    hamiltonian: &HamiltonianSource,
    t_grid: &[f64],
    ctrl: &StepControl,
) -> Result<Vec<Array1<C64>>> {
    let n = hamiltonian.size();
    if psi0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi0.len() });
    }
    let (h0, terms) = match hamiltonian {
        HamiltonianSource::Constant(h) => (SparseOp::from_dense(h.mat()), Vec::new()),
        HamiltonianSource::Driven(h) => (
            SparseOp::from_dense(h.static_part.mat()),
            h.terms
                .iter()
                .map(|t| (SparseOp::from_dense(t.op.mat()), SparseOp::from_dense(t.op.dagger().mat()), t.amp, t.freq))
                .collect::<Vec<_>>(),
        ),
    };
    let mut opts = OdeOptions::with_tolerances(ctrl.rtol, ctrl.atol);
    if let Some(h) = ctrl.max_step {
        opts.max_step = h;
    }
    if let HamiltonianSource::Driven(h) = hamiltonian {
        let wmax = h.max_frequency();
        if wmax > 0.0 {
            opts.max_step = opts.max_step.min(1.0 / (20.0 * wmax));
        }
    }
    let mi = C64::new(0.0, -1.0);
    let psis = ode_solve_with_stats(
        |t, y: &Array1<C64>, dy: &mut Array1<C64>| {
            dy.fill(ZERO);
            h0.vec_mul_acc(mi, y, dy);
            for (op, opd, amp, freq) in &terms {
                let c = amp * C64::from_polar(1.0, freq * t);
                op.vec_mul_acc(mi * c, y, dy);
                opd.vec_mul_acc(mi * c.conj(), y, dy);
            }
        },
        psi0.clone(),
        t_grid,
        &opts,
    )?
    .0;
    let norm0 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for (k, psi) in psis.iter().enumerate() {
        let drift = (psi.iter().map(|z| z.norm_sqr()).sum::<f64>() - norm0).abs();
        if ctrl.check_invariants && drift > 1e-7 {
            return Err(Error::IntegrationFailure { t: t_grid[k], reason: format!("norm drift {drift:.3e} exceeds 1e-7") });
        }
    }
    Ok(psis)
}

/// Outcome of [`calibrate_resonance`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceCalibration {
    pub delta_correction: f64,
    /// Window-averaged V_min at the optimum (coherent evolution).
    pub v_min: f64,
}

/// Finds the correction δ that maximizes coherent squeezing in the full
/// model. Drive Stark shifts move the phonon frequency away from the bare
/// 2g²/Δ_a estimate, so the search covers `center ± span`. The objective is
/// V_min averaged over the last fifth of `[0, t_probe]`, which washes out
/// the fast hybridization ripple.
pub fn calibrate_resonance(
    device: &DeviceParams,
    drives: &DriveParams,
    dims: HilbertDims,
    t_probe: f64,
    span: f64,
    ctrl: &StepControl,
) -> Result<ResonanceCalibration> {
    if !(t_probe > 0.0 && span > 0.0) {
        return Err(Error::InvalidParameter("t_probe and span must be positive".into()));
    }
    let a = on_phonon(&annihilation(dims.phonon_levels)?, dims)?;
    let aa = &a * &a;
    let na = on_phonon(&number(dims.phonon_levels)?, dims)?;
    let mut psi0 = Array1::zeros(dims.total());
    psi0[dims.index(0, 0)] = C64::new(1.0, 0.0);
    let window: Vec<f64> = (0..16).map(|k| t_probe * (0.8 + 0.2 * k as f64 / 15.0)).collect();
    let mut grid = vec![0.0];
    grid.extend_from_slice(&window);
    let center = drives.delta_correction;

    let mut failure = None;
    let mut objective = |c: f64| -> f64 {
        let run = || -> Result<f64> {
            let d = drives.with_correction(c);
            let h = HamiltonianSource::Driven(full_hamiltonian(device, &d, dims)?);
            let psis = evolve_schrodinger(&psi0, &h, &grid, ctrl)?;
            let mut acc = 0.0;
            for psi in &psis[1..] {
                let ev = |op: &Operator| psi.iter().zip(op.apply(psi).iter()).map(|(x, y)| x.conj() * y).sum::<C64>();
                let m = Moments { a: ev(&a), n: ev(&na).re, aa: ev(&aa) };
                acc += variances_from_moments(&m)?.v_min;
            }
            Ok(acc / window.len() as f64)
        };
        match run() {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        }
    };
    let (best, v_min) = scan_then_refine_min(&mut objective, center - span, center + span, 20, span * 1e-4);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(ResonanceCalibration { delta_correction: best, v_min })
}

/// Phonon first and second moments ⟨a⟩, ⟨a†a⟩, ⟨aa⟩.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub a: C64,
    pub n: f64,
    pub aa: C64,
}

impl Moments {
    pub const VACUUM: Moments = Moments { a: ZERO, n: 0.0, aa: ZERO };

    /// Moments of the phonon mode; composite states are reduced first.
    pub fn of(rho: &DensityMatrix) -> Result<Self> {
        let ph = match rho.dims() {
            Dims::Composite(_) => rho.phonon_state()?,
            Dims::Single(_) => rho.clone(),
        };
        let dim = ph.size();
        let a = annihilation(dim)?;
        let aa = &a * &a;
        Ok(Self {
            a: expectation(&ph, &a)?,
            n: expectation(&ph, &number(dim)?)?.re,
            aa: expectation(&ph, &aa)?,
        })
    }
}

/// Time series of the phonon moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub mean_a: Vec<C64>,
    pub mean_n: Vec<f64>,
    pub mean_aa: Vec<C64>,
}

impl MomentTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn point(&self, k: usize) -> Moments {
        Moments { a: self.mean_a[k], n: self.mean_n[k], aa: self.mean_aa[k] }
    }

    pub fn from_states(times: &[f64], states: &[DensityMatrix]) -> Result<Self> {
        let mut out = Self { times: times.to_vec(), mean_a: vec![], mean_n: vec![], mean_aa: vec![] };
        for rho in states {
            let m = Moments::of(rho)?;
            out.mean_a.push(m.a);
            out.mean_n.push(m.n);
            out.mean_aa.push(m.aa);
        }
        Ok(out)
    }

    /// ⟨a†a⟩ ≥ 0 and |⟨aa⟩| ≤ ⟨a†a⟩ + 1 within tolerance.
    pub fn validate(&self) -> Result<()> {
        for k in 0..self.len() {
            let m = self.point(k);
            if m.n < -1e-10 || m.aa.norm() > m.n + 1.0 + 1e-8 {
                return Err(Error::InvalidState(format!("unphysical moments at t = {}", self.times[k])));
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> Result<Vec<QuadratureStats>> {
        (0..self.len()).map(|k| variances_from_moments(&self.point(k))).collect()
    }

    /// CSV with columns t, Re/Im ⟨a⟩, ⟨a†a⟩, Re/Im ⟨aa⟩, V_min, V_max.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e: std::io::Error| Error::InvalidParameter(format!("write failed: {e}"));
        writeln!(w, "t,re_a,im_a,n,re_aa,im_aa,v_min,v_max").map_err(io)?;
        for k in 0..self.len() {
            let m = self.point(k);
            let s = variances_from_moments(&m)?;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                self.times[k], m.a.re, m.a.im, m.n, m.aa.re, m.aa.im, s.v_min, s.v_max
            )
            .map_err(io)?;
        }
        Ok(())
    }
}

/// Squeezing/antisqueezing variances and derived Gaussian quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureStats {
    pub v_min: f64,
    pub v_max: f64,
    /// Angle θ ∈ [0, π) of the squeezed quadrature X cos θ + P sin θ.
    pub angle: f64,
    pub n_thermal: f64,
    pub purity: f64,
}

impl QuadratureStats {
    pub fn from_variances(v_min: f64, v_max: f64, angle: f64) -> Result<Self> {
        let (v_min, v_max) = if v_min <= v_max { (v_min, v_max) } else { (v_max, v_min) };
        let prod = v_min * v_max;
        if prod < 0.25 - 1e-6 {
            return Err(Error::Heisenberg { product: prod });
        }
        let g = prod.sqrt();
        Ok(Self { v_min, v_max, angle, n_thermal: g - 0.5, purity: 1.0 / (2.0 * g) })
    }

    /// 10·log₁₀(V_min / ½).
    pub fn squeezing_db(&self) -> f64 {
        crate::units::variance_to_db(self.v_min)
    }
}

/// V_min/max = ½(1 + 2(⟨a†a⟩ − |⟨a⟩|²) ∓ 2|⟨a²⟩ − ⟨a⟩²|).
pub fn variances_from_moments(m: &Moments) -> Result<QuadratureStats> {
    let nc = m.n - m.a.norm_sqr();
    let ac = m.aa - m.a * m.a;
    let r = ac.norm();
    let v_min = 0.5 * (1.0 + 2.0 * nc - 2.0 * r);
    let v_max = 0.5 * (1.0 + 2.0 * nc + 2.0 * r);
    let angle = if r == 0.0 {
        0.0
    } else {
        ((ac.arg() - std::f64::consts::PI) / 2.0).rem_euclid(std::f64::consts::PI)
    };
    QuadratureStats::from_variances(v_min, v_max, angle)
}

fn pack(m: &Moments) -> [f64; 5] {
    [m.a.re, m.a.im, m.n, m.aa.re, m.aa.im]
}

fn unpack(y: &[f64]) -> Moments {
    Moments { a: C64::new(y[0], y[1]), n: y[2], aa: C64::new(y[3], y[4]) }
}

/// Right-hand side of the moment equations for H = Δ a†a + ε a†² + ε* a²
/// with jumps √γ a and √(2γ_φ) a†a.
pub fn moment_rhs(delta: f64, epsilon: C64, gamma: f64, gamma_phi: f64, m: &Moments) -> Moments {
    let i = C64::i();
    let da = -i * delta * m.a - 2.0 * i * epsilon * m.a.conj() - 0.5 * (gamma + 2.0 * gamma_phi) * m.a;
    let dn = (-2.0 * i * (epsilon * m.aa.conj() - epsilon.conj() * m.aa)).re - gamma * m.n;
    let daa = -2.0 * i * delta * m.aa - 2.0 * i * epsilon * (1.0 + 2.0 * m.n) - (gamma + 4.0 * gamma_phi) * m.aa;
    Moments { a: da, n: dn, aa: daa }
}

/// Real 6×6 generator of the affine moment system, acting on
/// (Re a, Im a, n, Re aa, Im aa, 1).
fn moment_generator(delta: f64, epsilon: C64, gamma: f64, gamma_phi: f64) -> Array2<f64> {
    let mut g = Array2::zeros((6, 6));
    let b = pack(&moment_rhs(delta, epsilon, gamma, gamma_phi, &Moments::VACUUM));
    for j in 0..5 {
        let mut e = [0.0; 5];
        e[j] = 1.0;
        let col = pack(&moment_rhs(delta, epsilon, gamma, gamma_phi, &unpack(&e)));
        for i in 0..5 {
            g[[i, j]] = col[i] - b[i];
        }
    }
    for i in 0..5 {
        g[[i, 5]] = b[i];
    }
    g
}

/// Exact solution of the moment equations for H = Δ a†a + ε a†² + ε* a²
/// (decay √γ a, dephasing √(2γ_φ) a†a) via the matrix exponential.
pub fn moment_evolution(
    delta: f64,
    epsilon: C64,
    gamma: f64,
    gamma_phi: f64,
    init: Moments,
    t_grid: &[f64],
) -> Result<MomentTrajectory> {
    if !(gamma >= 0.0 && gamma_phi >= 0.0) {
        return Err(Error::InvalidParameter("gamma and gamma_phi must be non-negative".into()));
    }
    let gen = moment_generator(delta, epsilon, gamma, gamma_phi);
    let y0 = pack(&init);
    let mut aug = Array1::zeros(6);
    for i in 0..5 {
        aug[i] = y0[i];
    }
    aug[5] = 1.0;
    let t0 = t_grid.first().copied().unwrap_or(0.0);
    let mut out = MomentTrajectory { times: t_grid.to_vec(), mean_a: vec![], mean_n: vec![], mean_aa: vec![] };
    for &t in t_grid {
        let prop = expm(&gen.mapv(|x| x * (t - t0)));
        let y = prop.dot(&aug);
        let m = unpack(y.as_slice().unwrap());
        out.mean_a.push(m.a);
        out.mean_n.push(m.n);
        out.mean_aa.push(m.aa);
    }
    Ok(out)
}

/// Moments under the effective squeezed-Kerr sign convention
/// H = −Δ a†a − (ε a†² + ε* a²) (Kerr term excluded): maps (Δ, ε) → (−Δ, −ε).
pub fn moment_evolution_effective(
    detuning: f64,
    epsilon: C64,
    gamma: f64,
    gamma_phi: f64,
    init: Moments,
    t_grid: &[f64],
) -> Result<MomentTrajectory> {
    moment_evolution(-detuning, -epsilon, gamma, gamma_phi, init, t_grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormVariances {
    pub v_min: f64,
    pub v_max: f64,
    /// Set when γ = 4ε and V_max was taken as its limit.
    pub singular: bool,
}

/// (1 − e^{−x})/x, continuous at 0.
fn one_minus_exp_over(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x / 2.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// Δ = γ_φ = 0 solution from vacuum:
/// V_min = (γ + 4ε e^{−t(γ+4ε)})/(2(γ+4ε)), V_max = (γ − 4ε e^{−t(γ−4ε)})/(2(γ−4ε)).
pub fn closed_form_squeezing(epsilon: f64, gamma: f64, t: f64) -> ClosedFormVariances {
    let e = epsilon.abs();
    let s = gamma + 4.0 * e;
    let u = gamma - 4.0 * e;
    // rewritten as ½ ∓ 2εt·(1 − e^{−x})/x so that both limits stay finite
    let v_min = 0.5 - 2.0 * e * t * one_minus_exp_over(s * t);
    let v_max = 0.5 + 2.0 * e * t * one_minus_exp_over(u * t);
    let singular = e > 0.0 && u.abs() <= 1e-12 * gamma.max(4.0 * e);
    ClosedFormVariances { v_min, v_max, singular }
}

/// Free evolution (Δ = ε = 0) of an ideal squeezed state with initial
/// minimum variance v0 = e^{−4r}/2 under decay γ and dephasing γ_φ.
pub fn free_decay_variances(v0: f64, gamma: f64, gamma_phi: f64, t: f64) -> Result<(f64, f64)> {
    if !(v0 > 0.0 && v0 <= 0.5) {
        return Err(Error::InvalidParameter(format!("v0 = {v0} outside (0, 1/2]")));
    }
    // with e^{−4r} = 2v₀: cosh 4r − 1 ∓ sinh 4r = 2v₀ − 1 and 1/(2v₀) − 1
    let sinh4r = 0.5 * (1.0 / (2.0 * v0) - 2.0 * v0);
    let decay = (-gamma * t).exp();
    let dephase = sinh4r * decay * -(-4.0 * gamma_phi * t).exp_m1();
    let v_min = 0.5 * (1.0 + decay * (2.0 * v0 - 1.0) + dephase);
    let v_max = 0.5 * (1.0 + decay * (1.0 / (2.0 * v0) - 1.0) - dephase);
    Ok((v_min, v_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqueezingRateFit {
    pub epsilon: f64,
    pub gamma: f64,
    pub epsilon_err: f64,
    pub gamma_err: f64,
    pub report: FitReport,
}

/// Fits V_min(t) = (γ + 4ε e^{−t(γ+4ε)})/(2(γ+4ε)) to `(t, V_min, σ)`
/// samples; σ = None gives an unweighted fit.
pub fn extract_squeezing_rate(samples: &[(f64, f64, Option<f64>)]) -> Result<SqueezingRateFit> {
    if samples.len() < 4 {
        return Err(Error::InvalidParameter(format!("need >= 4 samples, got {}", samples.len())));
    }
    if samples.iter().any(|s| !(s.1 > 0.0 && s.1 < 0.5 + 1e-3)) {
        return Err(Error::InvalidParameter("V_min samples must lie in (0, 1/2]".into()));
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let vs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let weighted = samples.iter().all(|s| s.2.is_some());
    let sig: Option<Vec<f64>> = if weighted { Some(samples.iter().map(|s| s.2.unwrap()).collect()) } else { None };

    // initial guess: early slope −2ε, late plateau γ/(2(γ+4ε))
    let mut order: Vec<usize> = (0..ts.len()).collect();
    order.sort_by(|&a, &b| ts[a].total_cmp(&ts[b]));
    let (i0, i1) = (order[0], order[1]);
    let slope = (vs[i1] - vs[i0]) / (ts[i1] - ts[i0]).max(1e-12);
    let span = ts[order[order.len() - 1]] - ts[i0];
    let eps0 = (-slope / 2.0).max(1e-3 / span.max(1e-12));
    let vinf = vs[order[order.len() - 1]].clamp(0.05, 0.49);
    let gamma0 = (8.0 * eps0 * vinf / (1.0 - 2.0 * vinf)).max(1e-3 / span.max(1e-12));

    let bounds = Bounds::new(vec![0.0, 0.0], vec![f64::INFINITY, f64::INFINITY])?;
    let report = curve_fit(
        |t, p| closed_form_squeezing(p[0], p[1], t).v_min,
        &ts,
        &vs,
        sig.as_deref(),
        &[eps0, gamma0],
        Some(&bounds),
        &FitOptions { absolute_sigma: weighted, ..FitOptions::default() },
    )?;
    if !report.converged {
        return Err(Error::FitFailure(format!(
            "squeezing-rate fit did not converge (residual norm {:.3e})",
            report.residual_norm
        )));
    }
    Ok(SqueezingRateFit {
        epsilon: report.params[0],
        gamma: report.params[1],
        epsilon_err: report.errors[0],
        gamma_err: report.errors[1],
        report,
    })
}

/// Fits V_min(t) = ½(1 + e^{−γt}(2V₀ − 1)); parameters are (V₀, γ).
pub fn fit_free_decay(samples: &[(f64, f64)]) -> Result<FitReport> {
    if samples.len() < 3 {
        return Err(Error::InvalidParameter("need >= 3 samples".into()));
    }
    let ts: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let vs: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let span = ts.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - ts.iter().cloned().fold(f64::INFINITY, f64::min);
    let v0 = vs[0].min(0.499);
    let bounds = Bounds::new(vec![1e-6, 0.0], vec![0.5, f64::INFINITY])?;
    curve_fit(
        |t, p| 0.5 * (1.0 + (-p[1] * t).exp() * (2.0 * p[0] - 1.0)),
        &ts,
        &vs,
        None,
        &[v0, 1.0 / span.max(1e-12)],
        Some(&bounds),
        &FitOptions::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_squeezed_kerr_hamiltonian, EffectiveParams};
    use crate::numerics::{ode_solve, OdeOptions};
    use crate::units::khz;

    fn eff(detuning: f64, eps: f64, kerr: f64) -> EffectiveParams {
        EffectiveParams { detuning, epsilon: C64::new(eps, 0.0), kerr, omega_a_shifted: 0.0 }
    }

    #[test]
    fn amplitude_damping() {
        let dim = 6;
        let h = Operator::zeros(Dims::Single(dim));
        let gamma = 0.3;
        let spec = LindbladSpec::constant(h, vec![(annihilation(dim).unwrap(), gamma)]).unwrap();
        let grid: Vec<f64> = (0..=6).map(|k| k as f64 * 5.0).collect();
        let states = evolve_lindblad(&DensityMatrix::fock(1, dim).unwrap(), &spec, &grid, &StepControl::default()).unwrap();
        for (t, rho) in grid.iter().zip(&states) {
            let n = expectation(rho, &number(dim).unwrap()).unwrap().re;
            assert!((n - (-gamma * t).exp()).abs() < 1e-6);
        }
    }

    #[test]
    fn coherent_rotation() {
        let dim = 25;
        let delta = 1.7;
        let h = build_squeezed_kerr_hamiltonian(&eff(delta, 0.0, 0.0), dim).unwrap();
        let spec = LindbladSpec::constant(h, vec![]).unwrap();
        let al = C64::new(1.0, 0.5);
        let grid = [0.0, 0.4, 1.1];
        let states = evolve_lindblad(&DensityMatrix::coherent(al, dim), &spec, &grid, &StepControl::default()).unwrap();
        for (t, rho) in grid.iter().zip(&states) {
            let m = Moments::of(rho).unwrap();
            assert!((m.a.norm() - al.norm()).abs() < 1e-6);
            // H = −Δ a†a  ->  a(t) = a(0) e^{+iΔt}
            let want = al * C64::from_polar(1.0, delta * t);
            assert!((m.a - want).norm() < 1e-6);
        }
    }

    #[test]
    fn rhs_matches_dense_formula() {
        // Oracle: −i[H, ρ] + Σ(LρL† − ½{L†L, ρ}) with dense products, for
        // monomial jumps (a, n) and a general one (a + a†²).
        for dim in [8, 30] {
        let a = annihilation(dim).unwrap();
        let ad = a.dagger();
        let h = &(&(&ad * &ad) * C64::new(0.3, 0.2)) + &(&(&a * &a) * C64::new(0.3, -0.2));
        let h = &h + &(&number(dim).unwrap() * 0.7);
        let general = &a + &(&ad * &ad);
        let jumps = vec![(a.clone(), 0.4), (number(dim).unwrap(), 0.1), (general, 0.05)];
        let spec = LindbladSpec::constant(h.clone(), jumps.clone()).unwrap();
        let psi = crate::fock::coherent_ket(C64::new(0.4, -0.3), dim);
        let rho = DensityMatrix::from_ket(Dims::Single(dim), &psi).unwrap();
        let rho = DensityMatrix::new(Dims::Single(dim), (rho.mat() * C64::new(0.7, 0.0)) + DensityMatrix::fock(2, dim).unwrap().mat() * C64::new(0.3, 0.0)).unwrap();
        let r = rho.mat();
        let hm = h.mat();
        let mi = C64::new(0.0, -1.0);
        let mut want = (hm.dot(r) - r.dot(hm)).mapv(|z| z * mi);
        for (l, rate) in &jumps {
            let l = l.mat().mapv(|z| z * rate.sqrt());
            let ld = l.t().mapv(|z| z.conj());
            let ldl = ld.dot(&l);
            want = want + l.dot(r).dot(&ld) - (ldl.dot(r) + r.dot(&ldl)).mapv(|z| z * 0.5);
        }
        let mut rhs = LindbladRhs::new(&spec);
        let mut got = Array2::zeros((dim, dim));
        for _ in 0..2 {
            rhs.eval(0.0, r, &mut got);
            let err = (&got - &want).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-12, "dim {dim}: max deviation {err:e}");
        }
        }
    }

    #[test]
    fn moment_equations_match_lindblad() {
        // Oracle: the moment equations are exact for a quadratic Hamiltonian.
        let dim = 30;
        let (d, e, g, gp) = (0.05, 0.01, 0.06, 0.01);
        let h = build_squeezed_kerr_hamiltonian(&eff(d, e, 0.0), dim).unwrap();
        let a = annihilation(dim).unwrap();
        let spec = LindbladSpec::constant(h, vec![(a, g), (number(dim).unwrap(), 2.0 * gp)]).unwrap();
        let grid: Vec<f64> = (0..=6).map(|k| k as f64 * 5.0).collect();
        let states = evolve_lindblad(&DensityMatrix::vacuum(dim), &spec, &grid, &StepControl::default()).unwrap();
        let traj = moment_evolution_effective(d, C64::new(e, 0.0), g, gp, Moments::VACUUM, &grid).unwrap();
        for (k, rho) in states.iter().enumerate() {
            let m = Moments::of(rho).unwrap();
            let p = traj.point(k);
            assert!((m.n - p.n).abs() < 1e-6, "n at {}: {} vs {}", grid[k], m.n, p.n);
            assert!((m.aa - p.aa).norm() < 1e-6);
        }
    }

    #[test]
    fn moment_expm_matches_rk() {
        let (d, e, g, gp) = (0.4, C64::new(0.2, -0.1), 0.08, 0.02);
        let init = Moments { a: C64::new(0.3, 0.1), n: 0.5, aa: C64::new(0.1, -0.2) };
        let t_end = 7.0;
        let closed = moment_evolution(d, e, g, gp, init, &[0.0, t_end]).unwrap();
        let rk = ode_solve(
            |_t, y: &Array1<f64>, dy: &mut Array1<f64>| {
                let r = pack(&moment_rhs(d, e, g, gp, &unpack(y.as_slice().unwrap())));
                for i in 0..5 {
                    dy[i] = r[i];
                }
            },
            Array1::from_vec(pack(&init).to_vec()),
            &[0.0, t_end],
            &OdeOptions::with_tolerances(1e-12, 1e-14),
        )
        .unwrap();
        let got = pack(&closed.point(1));
        for i in 0..5 {
            assert!((got[i] - rk[1][i]).abs() < 1e-8);
        }
    }

    #[test]
    fn moments_trivial_and_closed_form() {
        let grid = [0.0, 1.0, 5.0];
        let z = moment_evolution(0.0, ZERO, 0.0, 0.0, Moments::VACUUM, &grid).unwrap();
        for k in 0..3 {
            assert_eq!(z.point(k), Moments::VACUUM);
        }
        let eps = khz(7.6);
        let gamma = 1.0 / 12.8;
        let grid: Vec<f64> = (0..=20).map(|k| k as f64 * 0.75).collect();
        let traj = moment_evolution(0.0, C64::new(eps, 0.0), gamma, 0.0, Moments::VACUUM, &grid).unwrap();
        let st = traj.stats().unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let cf = closed_form_squeezing(eps, gamma, t);
            assert!((st[k].v_min - cf.v_min).abs() < 1e-8);
            assert!((st[k].v_max - cf.v_max).abs() < 1e-8);
        }
        // unrearranged form
        let s = gamma + 4.0 * eps;
        let v6 = (gamma + 4.0 * eps * (-6.0 * s).exp()) / (2.0 * s);
        assert!((closed_form_squeezing(eps, gamma, 6.0).v_min - v6).abs() < 1e-14);
    }

    #[test]
    fn variance_formulas() {
        let s = variances_from_moments(&Moments::VACUUM).unwrap();
        assert_eq!((s.v_min, s.v_max, s.n_thermal, s.purity), (0.5, 0.5, 0.0, 1.0));
        let s = QuadratureStats::from_variances(0.252, 1.45, 0.0).unwrap();
        assert!((s.n_thermal - 0.10).abs() < 0.005);
        assert!((s.purity - 0.83).abs() < 0.01);
        let r: f64 = 0.6;
        let m = Moments { a: ZERO, n: r.sinh().powi(2), aa: C64::new(-r.sinh() * r.cosh(), 0.0) };
        let s = variances_from_moments(&m).unwrap();
        assert!((s.v_min * s.v_max - 0.25).abs() < 1e-12);
        assert!(s.angle.abs() < 1e-12);
        assert!(matches!(QuadratureStats::from_variances(0.1, 0.5, 0.0), Err(Error::Heisenberg { .. })));
    }

    #[test]
    fn squeezing_angle_matches_rotated_quadrature() {
        let dim = 50;
        let rho = DensityMatrix::squeezed_vacuum(0.4, 1.1, dim);
        let s = variances_from_moments(&Moments::of(&rho).unwrap()).unwrap();
        let xq = crate::fock::rotated_quadrature(s.angle, dim).unwrap();
        let v = expectation(&rho, &(&xq * &xq)).unwrap().re;
        assert!((v - s.v_min).abs() < 1e-9);
        assert!((s.v_min - 0.5 * (-0.8f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn closed_form_limits() {
        let c = closed_form_squeezing(0.1, 0.3, 0.0);
        assert_eq!((c.v_min, c.v_max), (0.5, 0.5));
        let c = closed_form_squeezing(0.1, 0.6, 1e4);
        assert!((c.v_min - 0.6 / (2.0 * 1.0)).abs() < 1e-12);
        let c = closed_form_squeezing(0.1, 0.4, 2.0);
        assert!(c.singular);
        assert!((c.v_max - (0.5 + 2.0 * 0.1 * 2.0)).abs() < 1e-12);
        let near = closed_form_squeezing(0.1, 0.4 + 1e-9, 2.0);
        assert!((near.v_max - c.v_max).abs() < 1e-8);
    }

    #[test]
    fn free_decay_examples() {
        for t in [0.0, 3.0, 50.0] {
            let (a, b) = free_decay_variances(0.5, 0.1, 0.05, t).unwrap();
            assert!((a - 0.5).abs() < 1e-15 && (b - 0.5).abs() < 1e-15);
        }
        let (a, b) = free_decay_variances(0.2, 0.1, 0.05, 1e4).unwrap();
        assert!((a - 0.5).abs() < 1e-12 && (b - 0.5).abs() < 1e-12);
        let (a, _) = free_decay_variances(0.25, 1.0 / 78.0, 0.0, 78.0).unwrap();
        assert!((a - 0.5 * (1.0 - 0.5 * (-1.0f64).exp())).abs() < 1e-12);
        assert!((a - 0.408).abs() < 1e-3);
        let (a0, b0) = free_decay_variances(0.2, 0.1, 0.05, 0.0).unwrap();
        assert!((a0 - 0.2).abs() < 1e-12 && (b0 - 0.25 / 0.2).abs() < 1e-12);
    }

    #[test]
    fn free_decay_matches_moments_with_dephasing() {
        let v0: f64 = 0.15;
        let s = -(2.0 * v0).ln() / 2.0;
        let init = Moments { a: ZERO, n: s.sinh().powi(2), aa: C64::new(-s.sinh() * s.cosh(), 0.0) };
        let grid = [0.0, 2.0, 9.0];
        let traj = moment_evolution(0.0, ZERO, 0.07, 0.02, init, &grid).unwrap();
        for (k, &t) in grid.iter().enumerate() {
            let st = variances_from_moments(&traj.point(k)).unwrap();
            let (a, b) = free_decay_variances(v0, 0.07, 0.02, t).unwrap();
            assert!((st.v_min - a).abs() < 1e-10 && (st.v_max - b).abs() < 1e-10);
        }
    }

    #[test]
    fn squeezing_rate_round_trip() {
        let eps = khz(7.6);
        let gamma = 1.0 / 12.8;
        let samples: Vec<(f64, f64, Option<f64>)> =
            (1..=24).map(|k| k as f64 * 0.5).map(|t| (t, closed_form_squeezing(eps, gamma, t).v_min, None)).collect();
        let fit = extract_squeezing_rate(&samples).unwrap();
        assert!((fit.epsilon / eps - 1.0).abs() < 1e-3);
        assert!((fit.gamma / gamma - 1.0).abs() < 1e-3);

        let c = 3.0;
        let scaled: Vec<_> = samples.iter().map(|&(t, v, s)| (t * c, v, s)).collect();
        let fit2 = extract_squeezing_rate(&scaled).unwrap();
        assert!((fit2.epsilon * c / fit.epsilon - 1.0).abs() < 1e-6);
        assert!((fit2.gamma * c / fit.gamma - 1.0).abs() < 1e-6);

        let flat: Vec<_> = (1..=10).map(|k| (k as f64, 0.5, None)).collect();
        let f = extract_squeezing_rate(&flat).unwrap();
        assert!(f.epsilon.abs() < 1e-9);
        assert!(extract_squeezing_rate(&flat[..3]).is_err());
    }

    #[test]
    fn free_decay_fit_round_trip() {
        let gamma = 1.0 / 78.0;
        let samples: Vec<(f64, f64)> = (0..30)
            .map(|k| k as f64 * 5.0)
            .map(|t| (t, free_decay_variances(0.25, gamma, 0.0, t).unwrap().0))
            .collect();
        let fit = fit_free_decay(&samples).unwrap();
        assert!((fit.params[1] / gamma - 1.0).abs() < 1e-6);
        assert!((fit.params[0] - 0.25).abs() < 1e-8);
    }

    #[test]
    fn trajectory_csv() {
        let traj = moment_evolution(0.0, C64::new(0.05, 0.0), 0.1, 0.0, Moments::VACUUM, &[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("t,re_a,im_a,n,re_aa,im_aa,v_min,v_max\n"));
        assert_eq!(s.lines().count(), 3);
    }

    #[test]
    fn composite_state_moments() {
        let dims = HilbertDims::new(3, 8).unwrap();
        let q = DensityMatrix::fock(0, 3).unwrap();
        let p = DensityMatrix::coherent(C64::new(0.4, 0.0), 8);
        let rho = DensityMatrix::product(&q, &p).unwrap();
        let m = Moments::of(&rho).unwrap();
        assert!((m.a - C64::new(0.4, 0.0)).norm() < 1e-6);
        let _ = on_phonon(&annihilation(8).unwrap(), dims).unwrap();
    }

    #[test]
    fn rejects_negative_rate() {
        let h = Operator::zeros(Dims::Single(4));
        assert!(LindbladSpec::constant(h, vec![(annihilation(4).unwrap(), -1.0)]).is_err());
    }
}
