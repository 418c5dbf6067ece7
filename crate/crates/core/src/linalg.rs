//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimum-norm least-squares solution `V^+ u` via SVD.
///
/// Singular values below `max(rows, cols) * sigma_max * eps` are treated as
/// zero, matching the usual `pinv` default.
pub fn pinv_solve(v: &DMatrix<f64>, u: &DVector<f64>) -> DVector<f64> {
    let svd = v.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return DVector::zeros(v.ncols());
    }
    let tol = v.nrows().max(v.ncols()) as f64 * sigma_max * f64::EPSILON;
    svd.solve(u, tol).expect("both singular vector sets were computed")
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(v: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(v.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}
