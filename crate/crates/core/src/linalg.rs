//! Small dense helpers shared by the motion model and the filters.

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative size of the first diagonal jitter, as a fraction of the mean
/// diagonal entry.
pub const JITTER_SCALE: f64 = 1e-12;
/// Number of times the jitter is doubled before giving up.
pub const JITTER_DOUBLINGS: usize = 3;

/// Lower-triangular `L` with `L Lᵀ = m`.
///
/// A plain Cholesky factorization is tried first. On failure a diagonal
/// jitter of `JITTER_SCALE · trace / D` is added and doubled up to
/// `JITTER_DOUBLINGS` times. The zero matrix factors to zero.
pub fn psd_sqrt<const D: usize>(m: &SMatrix<f64, D, D>) -> Result<SMatrix<f64, D, D>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("matrix to factor has non-finite entries"));
    }
    if let Some(chol) = m.cholesky() {
        return Ok(chol.l());
    }
    if m.iter().all(|&v| v == 0.0) {
        return Ok(SMatrix::zeros());
    }
    let trace = m.trace();
    if trace <= 0.0 {
        return Err(Error::numerical(format!(
            "cannot factor matrix with non-positive trace {trace:e}"
        )));
    }
    let mut jitter = JITTER_SCALE * trace / D as f64;
    for _ in 0..=JITTER_DOUBLINGS {
        let shifted = m + SMatrix::<f64, D, D>::identity() * jitter;
        if let Some(chol) = shifted.cholesky() {
            return Ok(chol.l());
        }
        jitter *= 2.0;
    }
    Err(Error::numerical(format!(
        "Cholesky factorization failed after jitter escalation to {:e}",
        jitter / 2.0
    )))
}

pub fn symmetrize<const D: usize>(m: &SMatrix<f64, D, D>) -> SMatrix<f64, D, D> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue<const D: usize>(m: &SMatrix<f64, D, D>) -> f64 {
    let d = DMatrix::from_column_slice(D, D, symmetrize(m).as_slice());
    SymmetricEigen::new(d).eigenvalues.min()
}

/// Symmetrizes `m` and, when it is not positive semi-definite, lifts every
/// eigenvalue below `floor` up to `floor`. Returns whether a repair was made.
pub fn repair_psd<const D: usize>(m: &SMatrix<f64, D, D>, floor: f64) -> (SMatrix<f64, D, D>, bool) {
    let sym = symmetrize(m);
    if sym.cholesky().is_some() {
        return (sym, false);
    }
    let eig = SymmetricEigen::new(DMatrix::from_column_slice(D, D, sym.as_slice()));
    if eig.eigenvalues.min() >= 0.0 {
        return (sym, false);
    }
    let lifted = eig.eigenvalues.map(|l| l.max(floor));
    let v = eig.eigenvectors;
    let repaired = &v * DMatrix::from_diagonal(&lifted) * v.transpose();
    (
        symmetrize(&SMatrix::<f64, D, D>::from_column_slice(repaired.as_slice())),
        true,
    )
}
