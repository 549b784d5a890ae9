use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification of failures, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric (max |a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),

    #[error(
        "matrix is numerically singular (min eigenvalue {min:e}, threshold {threshold:e}); \
         regularize with C + eps*I before taking logarithms"
    )]
    NearSingular { min: f64, threshold: f64 },

    #[error("degenerate region `{region}`: maps to {cells} distinct cell(s), at least 2 required")]
    DegenerateRegion { region: String, cells: usize },

    #[error("kernel matrix is not positive semi-definite: min eigenvalue {min_eig:e}, spectral radius {max_abs_eig:e}")]
    NotPsd { min_eig: f64, max_abs_eig: f64 },

    #[error("SMO solver did not converge within {0} iterations (check gamma / C)")]
    NoConvergence(usize),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Format { .. }
            | Error::Validation(_)
            | Error::Manifest(_)
            | Error::DimensionMismatch { .. }
            | Error::DegenerateRegion { .. }
            | Error::Json(_) => ErrorClass::Validation,
            Error::NotSymmetric(_)
            | Error::NearSingular { .. }
            | Error::NotPsd { .. }
            | Error::NoConvergence(_)
            | Error::Numeric(_) => ErrorClass::Numeric,
            Error::Io { .. } => ErrorClass::Io,
        }
    }
}
