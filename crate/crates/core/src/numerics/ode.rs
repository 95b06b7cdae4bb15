//! Dormand-Prince 5(4) integrator with PI step-size control and continuous
//! (dense) output.
//!
//! The state type is generic: anything implementing [`OdeState`] works, which
//! covers real vectors and complex matrices (density matrices are integrated
//! as complex matrices directly).

use ndarray::{Array, Dimension, Zip};

use crate::{Error, Result, C64};

/// Element type of an ODE state.
pub trait OdeScalar: Copy + Send + Sync {
    fn zero() -> Self;
    fn scale(self, a: f64) -> Self;
    fn add(self, other: Self) -> Self;
    fn abs(self) -> f64;
}

impl OdeScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl OdeScalar for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    fn scale(self, a: f64) -> Self {
        self * a
    }
    fn add(self, other: Self) -> Self {
        self + other
    }
    fn abs(self) -> f64 {
        self.norm()
    }
}

/// Vector-space operations the integrator needs.
pub trait OdeState: Clone {
    fn zeros_like(&self) -> Self;
    /// `self += a * x`
    fn axpy(&mut self, a: f64, x: &Self);
    /// RMS of `err_i / (atol + rtol * max(|y0_i|, |y1_i|))`.
    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64;
}

impl<A: OdeScalar, D: Dimension> OdeState for Array<A, D> {
    fn zeros_like(&self) -> Self {
        Array::from_elem(self.raw_dim(), A::zero())
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        Zip::from(self).and(x).for_each(|s, &xi| *s = s.add(xi.scale(a)));
    }

    fn error_norm(err: &Self, y0: &Self, y1: &Self, rtol: f64, atol: f64) -> f64 {
        let n = err.len().max(1) as f64;
        let mut acc = 0.0;
        Zip::from(err).and(y0).and(y1).for_each(|&e, &a, &b| {
            let sc = atol + rtol * a.abs().max(b.abs());
            let r = e.abs() / sc;
            acc += r * r;
        });
        (acc / n).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
    /// Step ceiling (μs when integrating in the crate's units).
    pub max_step: f64,
    /// Relative step floor: the solver fails once `h < min_step_rel * max(|t|, 1)`.
    pub min_step_rel: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h0: None,
            max_step: f64::INFINITY,
            min_step_rel: 1e-13,
            max_steps: 50_000_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self { rtol, atol, ..Self::default() }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

struct Stages<S> {
    k: [S; 7],
    tmp: S,
}

impl<S: OdeState> Stages<S> {
    fn new(y: &S) -> Self {
        let z = y.zeros_like();
        Self {
            k: [z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z,
        }
    }

    /// Fills `k[1..7]` (k[0] must hold f(t, y)) and writes the 5th-order
    /// solution into `y_new`.
    fn step<F>(&mut self, f: &mut F, t: f64, y: &S, h: f64, y_new: &mut S)
    where
        F: FnMut(f64, &S, &mut S),
    {
        let combos: [(f64, &[(usize, f64)]); 5] = [
            (C2, &[(0, A21)]),
            (C3, &[(0, A31), (1, A32)]),
            (C4, &[(0, A41), (1, A42), (2, A43)]),
            (C5, &[(0, A51), (1, A52), (2, A53), (3, A54)]),
            (1.0, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]),
        ];
        for (stage, (c, coeffs)) in combos.iter().enumerate() {
            self.tmp.clone_from(y);
            for &(j, a) in coeffs.iter() {
                self.tmp.axpy(h * a, &self.k[j]);
            }
            let (_, rest) = self.k.split_at_mut(stage + 1);
            f(t + c * h, &self.tmp, &mut rest[0]);
        }
        y_new.clone_from(y);
        for &(j, a) in &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)] {
            y_new.axpy(h * a, &self.k[j]);
        }
        f(t + h, y_new, &mut self.k[6]);
    }

    fn error_estimate(&self, h: f64, err: &mut S) {
        *err = self.k[0].zeros_like();
        for &(j, e) in &[(0, E1), (2, E3), (3, E4), (4, E5), (5, E6), (6, E7)] {
            err.axpy(h * e, &self.k[j]);
        }
    }

    /// Continuous extension on `[t, t + h]` at fraction `theta`.
    fn dense(&self, y0: &S, y1: &S, h: f64, theta: f64) -> S {
        let mut ydiff = y1.clone();
        ydiff.axpy(-1.0, y0);
        let mut bspl = y0.zeros_like();
        bspl.axpy(h, &self.k[0]);
        bspl.axpy(-1.0, &ydiff);
        let mut r4 = ydiff.clone();
        r4.axpy(-h, &self.k[6]);
        r4.axpy(-1.0, &bspl);
        let mut r5 = y0.zeros_like();
        for &(j, d) in &[(0, D1), (2, D3), (3, D4), (4, D5), (5, D6), (6, D7)] {
            r5.axpy(h * d, &self.k[j]);
        }
        let th1 = 1.0 - theta;
        let mut out = y0.clone();
        out.axpy(theta, &ydiff);
        out.axpy(theta * th1, &bspl);
        out.axpy(theta * th1 * theta, &r4);
        out.axpy(theta * th1 * theta * th1, &r5);
        out
    }
}

fn initial_step<S, F>(f: &mut F, t0: f64, y0: &S, f0: &S, dir: f64, opts: &OdeOptions) -> f64
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let d0 = S::error_norm(y0, y0, y0, opts.rtol, opts.atol);
    let d1 = S::error_norm(f0, y0, y0, opts.rtol, opts.atol);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(opts.max_step);
    let mut y1 = y0.clone();
    y1.axpy(dir * h0, f0);
    let mut f1 = y0.zeros_like();
    f(t0 + dir * h0, &y1, &mut f1);
    f1.axpy(-1.0, f0);
    let d2 = S::error_norm(&f1, y0, y0, opts.rtol, opts.atol) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(opts.max_step)
}

/// Integrates `dy/dt = f(t, y)` and returns the state at every point of
/// `t_grid` (the first grid point is the initial time, so `out[0] == y0`).
///
/// `f(t, y, dydt)` writes the derivative into its third argument.
pub fn ode_solve<S, F>(f: F, y0: S, t_grid: &[f64], opts: &OdeOptions) -> Result<Vec<S>>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    ode_solve_with_stats(f, y0, t_grid, opts).map(|(ys, _)| ys)
}

pub fn ode_solve_with_stats<S, F>(
    mut f: F,
    y0: S,
    t_grid: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<S>, OdeStats)>
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let mut stats = OdeStats::default();
    if t_grid.is_empty() {
        return Ok((Vec::new(), stats));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    let mut out = Vec::with_capacity(t_grid.len());
    out.push(y0.clone());
    if t_grid.len() == 1 {
        return Ok((out, stats));
    }

    let t_end = *t_grid.last().unwrap();
    let mut t = t_grid[0];
    let mut y = y0;
    let mut st = Stages::new(&y);
    f(t, &y, &mut st.k[0]);
    stats.evaluations += 1;
    let mut h = match opts.h0 {
        Some(h) => h.min(opts.max_step),
        None => {
            stats.evaluations += 1;
            initial_step(&mut f, t, &y, &st.k[0].clone(), 1.0, opts)
        }
    };

    const SAFE: f64 = 0.9;
    const BETA: f64 = 0.04;
    const FAC_MIN: f64 = 0.2;
    const FAC_MAX: f64 = 10.0;
    let expo1 = 0.2 - BETA * 0.75;
    let mut facold: f64 = 1e-4;
    let mut next_out = 1;
    let mut y_new = y.zeros_like();
    let mut err = y.zeros_like();
    let mut last_rejected = false;

    while next_out < t_grid.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        let h_floor = opts.min_step_rel * t.abs().max(1.0);
        if h < h_floor {
            return Err(Error::StepUnderflow { t, h });
        }
        let mut last = false;
        if t + 1.01 * h >= t_end {
            h = t_end - t;
            last = true;
        }

        st.step(&mut f, t, &y, h, &mut y_new);
        stats.evaluations += 6;
        st.error_estimate(h, &mut err);
        let e = S::error_norm(&err, &y, &y_new, opts.rtol, opts.atol);
        if !e.is_finite() {
            stats.rejected += 1;
            h *= 0.1;
            last_rejected = true;
            continue;
        }
        let fac11 = e.powf(expo1);
        if e <= 1.0 {
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };
            while next_out < t_grid.len() && t_grid[next_out] <= t_new {
                let tg = t_grid[next_out];
                if (tg - t_new).abs() <= 1e-14 * t_new.abs().max(1.0) {
                    out.push(y_new.clone());
                } else {
                    let theta = (tg - t) / h;
                    out.push(st.dense(&y, &y_new, h, theta));
                }
                next_out += 1;
            }
            let mut fac = fac11 / facold.powf(BETA);
            fac = (fac / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            facold = e.max(1e-4);
            std::mem::swap(&mut y, &mut y_new);
            let k7 = st.k[6].clone();
            st.k[0] = k7;
            t = t_new;
            h = h_new.min(opts.max_step);
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h /= (fac11 / SAFE).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
    Ok((out, stats))
}

/// Fixed-step integration with the 5th-order Dormand-Prince weights and no
/// error control. Used for convergence-order checks.
pub fn ode_solve_fixed<S, F>(mut f: F, y0: S, t0: f64, t1: f64, n_steps: usize) -> S
where
    S: OdeState,
    F: FnMut(f64, &S, &mut S),
{
    let h = (t1 - t0) / n_steps as f64;
    let mut y = y0;
    let mut st = Stages::new(&y);
    let mut y_new = y.zeros_like();
    let mut t = t0;
    for _ in 0..n_steps {
        f(t, &y, &mut st.k[0]);
        st.step(&mut f, t, &y, h, &mut y_new);
        std::mem::swap(&mut y, &mut y_new);
        t += h;
    }
    y
}
