//! Fisher Vector quantization of local descriptor sets.
//!
//! The central encoder learns a variational auto-encoder over descriptors
//! and represents a set by the normalized gradient of its reconstruction
//! loss with respect to the decoder parameters. GMM Fisher vectors, VLAD,
//! bilinear pooling, average pooling, and concatenation are provided as
//! baselines, together with a one-vs-all linear SVM and ranking metrics.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod descriptors;
mod error;
pub mod eval;
pub mod fvcodec;
mod math;
mod matrix;
pub mod preprocess;
pub mod vae;

pub use descriptors::{generate_synthetic, Corpus, DescriptorGrid, DescriptorSet, Split, SyntheticSpec};
pub use error::{Error, Result};
pub use fvcodec::{FimDiagonal, FisherVector, NormFlags};
pub use matrix::Matrix;
pub use vae::{LossBreakdown, VaeConfig, VaeParams};
