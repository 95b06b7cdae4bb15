//! Matrix exponential by Taylor expansion with scaling and squaring.

use ndarray::{Array2, LinalgScalar};

use super::ode::OdeScalar;

fn norm1<A: OdeScalar>(m: &Array2<A>) -> f64 {
    m.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `exp(M)` to roughly 1e-12 relative accuracy for well-scaled inputs.
pub fn expm<A: LinalgScalar + OdeScalar>(m: &Array2<A>) -> Array2<A> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm needs a square matrix");
    let nrm = norm1(m);
    let s = if nrm > 0.5 { (nrm / 0.5).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a = m.mapv(|z| z.scale(scale));

    let mut result = Array2::<A>::eye(n);
    let mut term = Array2::<A>::eye(n);
    for k in 1..=40 {
        term = term.dot(&a).mapv(|z| z.scale(1.0 / k as f64));
        result = result + &term;
        if norm1(&term) <= 1e-17 * norm1(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}
