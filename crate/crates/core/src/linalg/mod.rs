//! Sparse storage, direct solves, tridiagonal kernels and splines.

pub mod io;
pub mod lu;
pub mod sparse;
pub mod spline;
pub mod tridiag;

pub use lu::{lu_factor, lu_solve, LuFactorization};
pub use sparse::SparseMatrix;
pub use spline::{spline_eval, spline_fit, CubicSpline, SplineKind};
pub use tridiag::{solve_shifted_tridiagonal, Tridiagonal};

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `||x - y|| / ||y||`
pub fn rel_diff(x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    num / norm2(y)
}
