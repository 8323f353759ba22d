//! A self-contained CNN micro-framework built around network deconvolution:
//! whitening the im2col patch matrix of every convolutional or fully-connected
//! layer with an approximate inverse square root of its covariance, as an
//! alternative to batch normalization.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense row-major tensors and the matmul kernels, generic over
//!   the scalar type (`f64` for oracle/test precision, `f32` for benchmark
//!   precision).
//! - [`rng`]: a fixed, documented SplitMix64 generator so every run is
//!   reproducible from a 64-bit seed.
//! - [`whitening`]: covariance estimation, the coupled Newton–Schulz inverse
//!   square root, and an independent eigendecomposition oracle.
//! - [`patching`]: im2col patch extraction, row subsampling, and channel-block
//!   grouping.
//! - [`nn`]: layers (conv, fc, ReLU, pooling, batch norm, deconvolution),
//!   softmax cross-entropy, backpropagation, and SGD.
//! - [`data`]: CIFAR-10/100 binary ingestion, deterministic subsetting and
//!   augmentation, and synthetic datasets with known covariance structure.

pub mod data;
pub mod error;
pub mod nn;
pub mod patching;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod whitening;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::{Precision, Scalar};
pub use tensor::Tensor;

/// Benchmark-precision tensor.
pub type Tensor32 = Tensor<f32>;
/// Oracle/test-precision tensor.
pub type Tensor64 = Tensor<f64>;
