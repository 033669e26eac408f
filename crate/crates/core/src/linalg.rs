//! Small dense helpers shared by the modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative symmetry tolerance for quadratic-form matrices.
pub const SYM_TOL: f64 = 1e-9;
/// Relative tolerance for definiteness tests, scaled by `max|M_ij|`.
pub const PD_TOL: f64 = 1e-10;
/// Relative tolerance for sign tests on Schur complements and memberships.
pub const ZERO_TOL: f64 = 1e-9;

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Absolute zero tolerance for a quadratic form with matrix `m`.
pub fn zero_tol_for(m: &DMatrix<f64>) -> f64 {
    ZERO_TOL * max_abs(m).max(1.0)
}

/// Returns `(M + Mᵀ)/2` after checking `M` is square and symmetric within [`SYM_TOL`].
pub fn symmetrize_checked(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let tol = SYM_TOL * max_abs(m).max(1.0);
    let asymmetry = max_abs(&(m - m.transpose()));
    if asymmetry > tol || !asymmetry.is_finite() {
        return Err(Error::NotSymmetric { asymmetry, tol });
    }
    Ok((m + m.transpose()) * 0.5)
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(m.clone()).eigenvalues
}

/// `A^(-1/2)` for a symmetric positive definite `A`, through its eigendecomposition.
pub fn sym_inv_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(a.clone());
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Cholesky factor of a matrix that must be positive definite.
pub fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::Solver("Cholesky factorization failed".into()))
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().min()
}

/// Quadratic form `xᵀ A x`.
pub fn quad(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}
