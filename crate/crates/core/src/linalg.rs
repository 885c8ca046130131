//! Small dense helpers on top of nalgebra for the symmetric matrices used
//! throughout (covariances, cost weights, noise couplings).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative tolerance used when deciding whether a matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() <= SYMMETRY_TOL * scale
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m)).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    *sym_eigenvalues(m).last().unwrap()
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Smallest singular value.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    m.singular_values().min()
}

pub fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    is_symmetric(m) && min_eigenvalue(m) > 0.0
}

pub fn outer(v: &DVector<f64>) -> DMatrix<f64> {
    v * v.transpose()
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| symmetrize(&c.inverse()))
}

/// log det of a symmetric positive definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    let chol = nalgebra::Cholesky::new(symmetrize(m))?;
    Some(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Matrix square of the symmetric part: Tr(X^2) for symmetric X.
pub fn trace_of_square(m: &DMatrix<f64>) -> f64 {
    m.component_mul(&m.transpose()).sum()
}

/// Frobenius inner product <X, Y> = Tr(X^T Y).
pub fn frob_dot(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.component_mul(y).sum()
}
