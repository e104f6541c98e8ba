use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("index ({row}, {col}) out of bounds for {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("matrix is singular: pivot {pivot:.3e} at column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("shifted tridiagonal system is singular at row {row} (shift coefficient {gamma:.6e})")]
    SingularShift { row: usize, gamma: f64 },

    #[error("{what}: value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown problem variant `{0}`")]
    UnknownVariant(String),

    #[error("Chebyshev fit did not converge up to degree {d_max} (tail {tail:.3e})")]
    ChebNoConvergence { d_max: usize, tail: f64 },

    #[error("Lanczos breakdown at step {step} (|w^T v| = {inner:.3e})")]
    Breakdown { step: usize, inner: f64 },

    #[error("shifted BiCG did not converge for {} value(s) after {k} steps", .unconverged.len())]
    SweepNoConvergence {
        k: usize,
        /// (free value, residual estimate) for every unconverged value.
        unconverged: Vec<(f64, f64)>,
    },

    #[error("supplied anchor {value} is not a node of the equidistant grid")]
    AnchorOffGrid { value: f64 },

    #[error("node ({0}, {1}) is not a member of the node set")]
    NodeNotMember(usize, usize),

    #[error("reference vector has zero norm")]
    ZeroReference,

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
