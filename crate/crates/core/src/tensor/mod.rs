//! Dense 32-bit matrix kernels.
//!
//! [`Matrix`] is the only numeric carrier exposed by the crate. Storage is
//! `f32`; every reduction (dot products, norms, row sums) accumulates in `f64`
//! in a fixed order and rounds once on the way out, so results do not depend
//! on how rows are scheduled across threads.

mod mask;
pub(crate) use mask::check_rate;
mod matrix;
mod qr;
mod svd;

pub(crate) mod dense;

pub use mask::{apply_mask, magnitude_mask, pruned_count, row_l1, Mask};
pub use matrix::{matmul, Matrix};
pub use qr::thin_qr;
pub use svd::{jacobi_svd, lowrank_svd, SvdTriple};
