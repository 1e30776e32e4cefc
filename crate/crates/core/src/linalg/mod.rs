//! Dense real linear algebra for small matrices (dimension up to a few hundred).

mod eigen;
mod expm;
mod lstsq;
mod matrix;

pub use eigen::{eigenvalues, EigenSpectrum};
pub use expm::{expm, expm_with_grad};
pub use lstsq::{least_squares, LeastSquaresFit};
pub use matrix::{gemm, DenseMatrix, Lu};

pub(crate) use matrix::gemm_raw;

use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("QR iteration did not converge after {iterations} sweeps; {} eigenvalues isolated", found.len())]
    NoConvergence { iterations: usize, found: Vec<Complex64> },
}

pub(crate) fn require_square_finite(a: &DenseMatrix, what: &str) -> Result<(), LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::Dimension(format!("{what} needs a square matrix, got {}x{}", a.rows(), a.cols())));
    }
    if !a.is_finite() {
        return Err(LinalgError::Domain(format!("{what}: matrix has non-finite entries")));
    }
    Ok(())
}
