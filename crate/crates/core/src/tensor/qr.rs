use super::dense::{householder_qr, Mat64};
use super::Matrix;
use crate::error::{Error, Result};

/// Thin QR factorization of a tall matrix.
///
/// `Q` is `m x n` with orthonormal columns, `R` is `n x n` upper triangular
/// with a non-negative diagonal. Rank-deficient input yields zero (or tiny)
/// diagonal entries in `R`; `Q` stays orthonormal.
pub fn thin_qr(m: &Matrix) -> Result<(Matrix, Matrix)> {
    if m.rows() < m.cols() {
        return Err(Error::Shape(format!(
            "thin_qr needs rows >= cols, got {}x{}; transpose first",
            m.rows(),
            m.cols()
        )));
    }
    let (q, r) = householder_qr(&Mat64::from_matrix(m));
    Ok((q.to_matrix(), r.to_matrix()))
}
