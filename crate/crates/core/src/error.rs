use thiserror::Error;

/// Errors produced by the numerical routines and the experiment engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("vector is not of unit norm (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("vectors are not orthonormal (largest Gram deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("rank deficiency at vector {index}")]
    RankDeficient { index: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular or not positive definite (eigenvalue ratio {ratio:e})")]
    Singular { ratio: f64 },

    #[error("size guard exceeded: {what} = {value}, limit {limit}")]
    SizeGuard {
        what: &'static str,
        value: usize,
        limit: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unknown {kind} `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("{failed} of {total} replications failed to fit (limit 1%)")]
    TooManyFitFailures { failed: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
