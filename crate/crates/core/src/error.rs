use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid probability table: {0}")]
    Probability(String),

    #[error("invalid reward table: {0}")]
    Reward(String),

    #[error("chain structure error: {0}")]
    Structure(String),

    #[error("numerical error in {context}: residual {residual:.3e} exceeds tolerance {tolerance:.1e}")]
    Numerical {
        context: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("no convergence after {iterations} iterations (last span {span:.3e})")]
    Convergence { iterations: usize, span: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    Unknown {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}
