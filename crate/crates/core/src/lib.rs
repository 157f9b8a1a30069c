//! Training-free merging of LoRA adapters.
//!
//! The crate covers four layers:
//!
//! * [`tensor`]: deterministic `f32` matrix kernels (masking, thin QR,
//!   Jacobi SVD, factored low-rank SVD).
//! * [`adapter`]: adapter checkpoints on disk and cross-task validation.
//! * [`merge`]: complementary-scaling merge plus Task Arithmetic, Ties and
//!   DARE baselines.
//! * [`analysis`] and [`synth`]: spectral diagnostics and a synthetic
//!   multi-task benchmark with known ground truth.
//!
//! The `parallel` feature (on by default) spreads independent work across a
//! rayon pool; turning it off gives the same results sequentially.

pub mod adapter;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod io;
pub mod merge;
pub mod par;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use adapter::{AdapterSet, LoraPair};
pub use error::{Error, Result};
pub use tensor::Matrix;
