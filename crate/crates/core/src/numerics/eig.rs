//! Hermitian eigendecomposition backed by nalgebra.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2};

use crate::{Error, Result, C64};

#[derive(Clone, Debug)]
pub struct HermitianEig {
    /// Ascending.
    pub values: Array1<f64>,
    /// Column `k` is the eigenvector for `values[k]`.
    pub vectors: Array2<C64>,
}

impl HermitianEig {
    pub fn vector(&self, k: usize) -> Array1<C64> {
        self.vectors.column(k).to_owned()
    }
}

fn frobenius(m: &Array2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Deviation `‖M − M†‖_F / max(‖M‖_F, tiny)`.
pub fn hermiticity_defect(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (m[[i, j]] - m[[j, i]].conj()).norm_sqr();
        }
    }
    acc.sqrt() / frobenius(m).max(f64::MIN_POSITIVE)
}

pub fn hermitian_eig(m: &Array2<C64>) -> Result<HermitianEig> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
    }
    let defect = hermiticity_defect(m);
    if defect > 1e-10 {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let dm = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[[i, j]] + m[[j, i]].conj()));
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = Array1::from_iter(order.iter().map(|&k| eig.eigenvalues[k]));
    let vectors = Array2::from_shape_fn((n, n), |(i, c)| eig.eigenvectors[(i, order[c])]);
    Ok(HermitianEig { values, vectors })
}
