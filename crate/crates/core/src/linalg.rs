//! Dense Hermitian eigen-solves.
//!
//! Matrices live in nalgebra containers; the eigen-decompositions are
//! delegated to faer, which is markedly faster for the sizes used here.

use faer::Side;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{LabError, Result};

fn to_faer<T: Copy>(m: &DMatrix<T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn square<T>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(LabError::NumericFailure(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Ascending eigenvalues of a real symmetric matrix (lower triangle read).
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::NumericFailure(format!("symmetric eigensolver: {e:?}")))
}

/// Ascending eigenvalues and orthonormal eigenvectors (columns).
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LabError::NumericFailure(format!("symmetric eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i]).collect();
    Ok((vals, DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}

/// Ascending eigenvalues of a complex Hermitian matrix.
pub fn herm_eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<f64>> {
    square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    to_faer(m)
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| LabError::NumericFailure(format!("hermitian eigensolver: {e:?}")))
}

pub fn herm_eigen(m: &DMatrix<Complex64>) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    square(m)?;
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), DMatrix::zeros(0, 0)));
    }
    let evd = to_faer(m)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LabError::NumericFailure(format!("hermitian eigensolver: {e:?}")))?;
    let s = evd.S().column_vector();
    let u = evd.U();
    let vals = (0..n).map(|i| s[i].re).collect();
    Ok((vals, DMatrix::from_fn(n, n, |i, j| u[(i, j)])))
}
