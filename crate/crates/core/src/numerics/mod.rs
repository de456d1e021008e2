//! Dense and sparse linear algebra used by the rest of the crate.

mod dense;
mod eigen;
mod sparse;

pub use dense::{forward_substitution, Cholesky, DenseMatrix};
pub use eigen::{sym_eig, SymEigen};
pub use sparse::{solve_spd, BandCholesky, SparseSymMatrix};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
