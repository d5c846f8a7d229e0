//! Reconstruction of generative sparse-latent (GSL) signals from
//! under-sampled linear measurements.
//!
//! A GSL signal is `x = f(Bz)` where `z` is a sparse latent vector, `B` a
//! column-normalized mixing matrix and `f` a differentiable generative map
//! (a one-layer network, an affine-coupling flow, or an elementwise Gaussian
//! CDF). Measurements are `y = Ax + n`. The crate provides:
//!
//! * [`numerics`]: a small dense linear-algebra kernel and seeded streams,
//! * [`generative`]: the generative maps with exact vector-Jacobian products,
//! * [`sensing`]: latents, sensing matrices, noisy measurements and datasets,
//! * [`reconstruct`]: penalized objectives and ADAM-driven gradient search,
//! * [`nnlm`]: the LMMSE-based normalized non-linearity measure,
//! * [`metrics`]: SRNR and ASCE.

pub mod error;
pub mod generative;
pub mod metrics;
pub mod nnlm;
pub mod numerics;
pub mod reconstruct;
pub mod sensing;

pub use error::{Error, Result};
pub use generative::{Activation, GenerativeMap, MixingMatrix, ModelKind, ModelSpec};
pub use numerics::{Matrix, RngStream};
