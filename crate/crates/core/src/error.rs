use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value {value} at {location}")]
    NonFinite { value: f64, location: String },

    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),

    #[error("range {start}..{end} out of bounds for {available} time steps")]
    OutOfRange {
        start: usize,
        end: usize,
        available: usize,
    },

    #[error("spectrum bin {bin} must be real, found imaginary part {imag}")]
    NonRealBoundaryBin { bin: usize, imag: f64 },

    #[error("backward called before a forward pass was cached")]
    NoCachedForward,

    #[error("feature {feature} has zero variance over the fitting range")]
    ZeroVariance { feature: usize },

    #[error("series too short: need at least {required} time steps, have {available}")]
    InsufficientLength { required: usize, available: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("non-finite gradient in parameter group {group} at index {index}")]
    NonFiniteGradient { group: usize, index: usize },

    #[error("csv {path}: row {row}, column {column}: {message}")]
    Csv {
        path: String,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("checkpoint: bad magic bytes")]
    BadMagic,

    #[error("checkpoint: unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checkpoint: truncated while reading {section} (need {needed} bytes, {remaining} left)")]
    Truncated {
        section: &'static str,
        needed: usize,
        remaining: usize,
    },

    #[error("checkpoint: inconsistent shape: {0}")]
    CheckpointShape(String),

    #[error("checkpoint: {0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
