use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {path}: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("record count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class {0} is absent from the labels")]
    ClassAbsent(u8),

    #[error("dataset invariant violated: {0}")]
    Dataset(String),

    #[error("matrix is not symmetric: |M[{row}][{col}] - M[{col}][{row}]| = {gap:e}")]
    Asymmetric { row: usize, col: usize, gap: f64 },

    #[error(
        "rejection sampling failed after {attempts} attempts ({placed} of {wanted} points placed)"
    )]
    RejectionFailed {
        attempts: usize,
        placed: usize,
        wanted: usize,
    },

    #[error("Gram consistency check failed at ({row}, {col}): jacobian {jacobian:e} vs closed form {closed:e}")]
    GramMismatch {
        row: usize,
        col: usize,
        jacobian: f64,
        closed: f64,
    },

    #[error("training diverged at step {step}: robust loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
