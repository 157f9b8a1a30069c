use super::dense::{canonicalize_signs, householder_qr, one_sided_jacobi, Mat64, JACOBI_MAX_SWEEPS};
use super::{matmul, Matrix};
use crate::error::{Error, Result};

/// Economy singular value decomposition `U · diag(sigma) · Vᵀ`.
///
/// `sigma` is descending and non-negative. Singular vectors follow a fixed
/// sign convention: the leading non-negligible component of every `v` column
/// is non-negative.
#[derive(Clone, Debug)]
pub struct SvdTriple {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdTriple {
    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }

    /// Materializes `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let us = self
            .u
            .scale_columns(&self.sigma)
            .expect("sigma length matches U columns");
        matmul(&us, &self.v.transpose()).expect("U and V share the inner dimension")
    }

    pub fn left_vector(&self, i: usize) -> Vec<f32> {
        self.u.column(i)
    }

    pub fn right_vector(&self, i: usize) -> Vec<f32> {
        self.v.column(i)
    }

    fn from_parts(mut u: Mat64, sigma: Vec<f64>, mut v: Mat64) -> Self {
        canonicalize_signs(&mut u, &mut v);
        Self {
            u: u.to_matrix(),
            sigma,
            v: v.to_matrix(),
        }
    }
}

fn jacobi(core: &Mat64) -> Result<super::dense::Svd64> {
    one_sided_jacobi(core).map_err(|residual| {
        Error::Numeric(format!(
            "Jacobi SVD did not converge in {JACOBI_MAX_SWEEPS} sweeps (residual coupling {residual:.3e})"
        ))
    })
}

/// SVD of a small square matrix by one-sided Jacobi rotations.
///
/// Iterates until every pairwise column coupling is below `1e-12` or 100
/// sweeps have run.
pub fn jacobi_svd(c: &Matrix) -> Result<SvdTriple> {
    if c.rows() != c.cols() {
        return Err(Error::Shape(format!(
            "jacobi_svd needs a square matrix, got {}x{}",
            c.rows(),
            c.cols()
        )));
    }
    let svd = jacobi(&Mat64::from_matrix(c))?;
    Ok(SvdTriple::from_parts(svd.u, svd.sigma, svd.v))
}

/// SVD of `Σ_i B_i · A_i` without forming the `d_out x d_in` product.
///
/// Stacks the `B` factors side by side and the `Aᵀ` factors side by side,
/// takes a thin QR of each, and runs Jacobi on the small `R_b · R_aᵀ` core.
/// The result has `Σ r_i` singular triples (trailing ones may be zero).
pub fn lowrank_svd(factors: &[(&Matrix, &Matrix)]) -> Result<SvdTriple> {
    let Some(&(b0, a0)) = factors.first() else {
        return Err(Error::Shape("lowrank_svd needs at least one factor pair".into()));
    };
    let (d_out, d_in) = (b0.rows(), a0.cols());
    let mut total_rank = 0;
    for (idx, &(b, a)) in factors.iter().enumerate() {
        if b.cols() != a.rows() {
            return Err(Error::Shape(format!(
                "factor {idx}: B is {}x{} but A is {}x{}",
                b.rows(),
                b.cols(),
                a.rows(),
                a.cols()
            )));
        }
        if b.rows() != d_out || a.cols() != d_in {
            return Err(Error::Shape(format!(
                "factor {idx}: product is {}x{}, expected {d_out}x{d_in}",
                b.rows(),
                a.cols()
            )));
        }
        total_rank += b.cols();
    }
    if total_rank > d_out.min(d_in) {
        return Err(Error::Shape(format!(
            "total rank {total_rank} exceeds min({d_out}, {d_in})"
        )));
    }

    let mut b_cat = Mat64::zeros(d_out, total_rank);
    let mut at_cat = Mat64::zeros(d_in, total_rank);
    let mut offset = 0;
    for &(b, a) in factors {
        let r = b.cols();
        for i in 0..d_out {
            for t in 0..r {
                *b_cat.at_mut(i, offset + t) = b.get(i, t) as f64;
            }
        }
        for t in 0..r {
            for j in 0..d_in {
                *at_cat.at_mut(j, offset + t) = a.get(t, j) as f64;
            }
        }
        offset += r;
    }

    let (qb, rb) = householder_qr(&b_cat);
    let (qa, ra) = householder_qr(&at_cat);
    let core = rb.matmul(&ra.transpose());
    let svd = jacobi(&core)?;
    let u = qb.matmul(&svd.u);
    let v = qa.matmul(&svd.v);
    Ok(SvdTriple::from_parts(u, svd.sigma, v))
}
