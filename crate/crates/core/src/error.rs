use thiserror::Error;

/// Broad classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {field}: {msg}")]
    Invalid { field: String, msg: String },

    #[error("degenerate denominator: sum of alpha_k^2 * qvar_k = {0}")]
    DegenerateDenominator(f64),

    #[error("solver did not converge after {iterations} iterations (last={last}, g={residual}, bracket=[{lo}, {hi}])")]
    NoConvergence {
        iterations: usize,
        last: f64,
        residual: f64,
        lo: f64,
        hi: f64,
    },

    #[error("fbm synthesis failed: {0}")]
    Synthesis(String),

    #[error("non-finite trajectory value in mode {mode} at index {index}")]
    NonFinite { mode: usize, index: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("insufficient points: {0}")]
    InsufficientPoints(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_)
            | Error::Invalid { .. }
            | Error::Schema(_)
            | Error::InsufficientPoints(_)
            | Error::Io(_) => ErrorKind::Validation,
            Error::DegenerateDenominator(_)
            | Error::NoConvergence { .. }
            | Error::Synthesis(_)
            | Error::NonFinite { .. }
            | Error::DegenerateSample(_) => ErrorKind::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
