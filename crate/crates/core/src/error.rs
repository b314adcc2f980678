use thiserror::Error;

/// Errors raised by the decomposition kernels and streaming states.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DmdError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("data matrix is identically zero")]
    ZeroData,

    #[error("matrix is numerically singular (condition estimate {cond:.3e})")]
    Singular { cond: f64 },

    #[error("numerical loss of definiteness ({0})")]
    LossOfDefiniteness(String),

    #[error("rank deficient: estimated rank {rank}, required {required}")]
    RankDeficient { rank: usize, required: usize },

    #[error("decomposition failed to converge: {0}")]
    NoConvergence(&'static str),
}

pub type Result<T> = std::result::Result<T, DmdError>;

pub(crate) fn ensure_finite_slice(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DmdError::NonFinite(what))
    }
}

pub(crate) fn ensure_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DmdError::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
