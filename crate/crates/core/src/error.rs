use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("formulation {kind} cannot be built from a {instance} instance")]
    KindMismatch { kind: String, instance: &'static str },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("LP relaxation became infeasible after adding cuts (an invalid cut was added)")]
    InvalidCutDetected,

    #[error("variable {0} is not basic")]
    NotBasic(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
