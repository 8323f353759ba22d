//! Error type shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{op} expects a rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("shape {shape:?} contains a zero-size dimension")]
    EmptyShape { shape: Vec<usize> },

    #[error("covariance needs at least 2 samples, got {got}")]
    InsufficientSamples { got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("matrix is not positive definite: {detail}")]
    NotPositiveDefinite { detail: String },

    #[error(
        "invalid convolution geometry: input {height}x{width}, kernel {kh}x{kw}, \
         stride {stride}, padding {padding}"
    )]
    Geometry {
        height: usize,
        width: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    },

    #[error("eval-mode forward in `{layer}` before any training step")]
    UninitializedStats { layer: String },

    #[error("backward called without a recorded forward pass")]
    NoForwardPass,

    #[error("non-finite gradient in layer `{layer}`")]
    Divergence { layer: String },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("{path}: expected {expected} bytes, found {actual}")]
    FileSize {
        path: String,
        expected: u64,
        actual: u64,
    },

    #[error("{path}: record {index} is corrupt: {detail}")]
    CorruptRecord {
        path: String,
        index: usize,
        detail: String,
    },

    #[error("missing file: {path}")]
    MissingFile { path: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
