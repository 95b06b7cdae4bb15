//! Real-coefficient cubic roots.
//!
//! The real/complex split is decided by the sign of the discriminant evaluated
//! exactly on the (binary) input coefficients, so classification near a
//! double root does not depend on round-off. Root values come from the
//! closed-form solution followed by a Newton polish.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

use crate::C64;

/// A complex root counts as real when `|Im| < IMAG_THRESHOLD * |root|`.
pub const IMAG_THRESHOLD: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CubicRoots {
    /// All roots with multiplicity; real ones first, ascending.
    pub roots: Vec<C64>,
    /// Real roots with multiplicity, ascending.
    pub real: Vec<f64>,
}

/// Sign of `18abcd − 4b³d + b²c² − 4ac³ − 27a²d²`, computed exactly.
pub fn discriminant_sign(a: f64, b: f64, c: f64, d: f64) -> i8 {
    let q = |x: f64| BigRational::from_float(x);
    let (Some(a), Some(b), Some(c), Some(d)) = (q(a), q(b), q(c), q(d)) else {
        let v = discriminant(a, b, c, d);
        return if v > 0.0 { 1 } else if v < 0.0 { -1 } else { 0 };
    };
    let k = |n: i64| BigRational::from_integer(BigInt::from(n));
    let disc = k(18) * &a * &b * &c * &d - k(4) * &b * &b * &b * &d + &b * &b * &c * &c
        - k(4) * &a * &c * &c * &c
        - k(27) * &a * &a * &d * &d;
    if disc.is_zero() {
        0
    } else if disc.is_positive() {
        1
    } else {
        -1
    }
}

/// Floating-point discriminant (informational; not used for classification).
pub fn discriminant(a: f64, b: f64, c: f64, d: f64) -> f64 {
    18.0 * a * b * c * d - 4.0 * b.powi(3) * d + b * b * c * c - 4.0 * a * c.powi(3) - 27.0 * a * a * d * d
}

fn polish(coef: [f64; 4], x0: f64) -> f64 {
    let [a, b, c, d] = coef;
    let eval = |x: f64| (((a * x + b) * x + c) * x + d, (3.0 * a * x + 2.0 * b) * x + c);
    let mut x = x0;
    let (mut fx, mut dfx) = eval(x);
    for _ in 0..8 {
        if fx == 0.0 || dfx == 0.0 {
            break;
        }
        let xn = x - fx / dfx;
        let (fn_, dfn) = eval(xn);
        if fn_.abs() > fx.abs() {
            break;
        }
        let done = (xn - x).abs() <= 1e-15 * xn.abs().max(f64::MIN_POSITIVE);
        x = xn;
        fx = fn_;
        dfx = dfn;
        if done {
            break;
        }
    }
    x
}

fn finish(mut real: Vec<f64>, complex: Vec<C64>) -> CubicRoots {
    real.sort_by(f64::total_cmp);
    let mut roots: Vec<C64> = real.iter().map(|&x| C64::new(x, 0.0)).collect();
    roots.extend(complex);
    CubicRoots { roots, real }
}

fn quadratic(a: f64, b: f64, c: f64) -> CubicRoots {
    if a == 0.0 {
        if b == 0.0 {
            return finish(Vec::new(), Vec::new());
        }
        return finish(vec![-c / b], Vec::new());
    }
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let q = -0.5 * (b + b.signum() * disc.sqrt());
        if q == 0.0 {
            return finish(vec![0.0, 0.0], Vec::new());
        }
        return finish(vec![q / a, c / q], Vec::new());
    }
    let re = -b / (2.0 * a);
    let im = (-disc).sqrt() / (2.0 * a.abs());
    let mag = (re * re + im * im).sqrt();
    if im < IMAG_THRESHOLD * mag {
        return finish(vec![re, re], Vec::new());
    }
    finish(Vec::new(), vec![C64::new(re, im), C64::new(re, -im)])
}

/// Roots of `c3 x³ + c2 x² + c1 x + c0`. Degrades to the quadratic or linear
/// case when the leading coefficients vanish.
pub fn cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> CubicRoots {
    if c3 == 0.0 {
        return quadratic(c2, c1, c0);
    }
    let coef = [c3, c2, c1, c0];
    let sign = discriminant_sign(c3, c2, c1, c0);
    let (b, c, d) = (c2 / c3, c1 / c3, c0 / c3);
    let shift = b / 3.0;
    let p = c - b * b / 3.0;
    let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;

    match sign {
        0 => {
            let h = c2 * c2 - 3.0 * c3 * c1;
            if h == 0.0 {
                let x = -c2 / (3.0 * c3);
                return finish(vec![x, x, x], Vec::new());
            }
            let double = (9.0 * c3 * c0 - c2 * c1) / (2.0 * h);
            let simple = (4.0 * c3 * c2 * c1 - 9.0 * c3 * c3 * c0 - c2.powi(3)) / (c3 * h);
            finish(vec![double, double, polish(coef, simple)], Vec::new())
        }
        1 if p < 0.0 => {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            let th = arg.acos() / 3.0;
            let two_pi_3 = 2.0 * std::f64::consts::PI / 3.0;
            let raw: Vec<f64> = (0..3).map(|k| m * (th - two_pi_3 * k as f64).cos() - shift).collect();
            let mut polished: Vec<f64> = raw.iter().map(|&x| polish(coef, x)).collect();
            polished.sort_by(f64::total_cmp);
            // Newton may hop between two very close roots; keep the raw values then.
            if polished.windows(2).any(|w| w[1] - w[0] <= 0.0) {
                return finish(raw, Vec::new());
            }
            finish(polished, Vec::new())
        }
        _ => {
            let r = if sign < 0 {
                let disc = q * q / 4.0 + p.powi(3) / 27.0;
                let s = disc.max(0.0).sqrt();
                let u = (-q / 2.0 + s).cbrt();
                let v = (-q / 2.0 - s).cbrt();
                polish(coef, u + v - shift)
            } else {
                // positive exact discriminant but p rounded to >= 0: nearly triple root
                polish(coef, -shift)
            };
            let bb = b + r;
            let cc = if r.abs() > 1.0 { -d / r } else { c + r * bb };
            let mut out = quadratic(1.0, bb, cc);
            out.real.push(r);
            let complex: Vec<C64> = out.roots.into_iter().filter(|z| z.im != 0.0).collect();
            finish(out.real, complex)
        }
    }
}
