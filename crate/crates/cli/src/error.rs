use std::path::Path;

use streamdmd::DmdError;
use streamdmd_datagen::GenError;
use thiserror::Error;

/// Failures of a command, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::ChecksFailed(_) => 1,
        }
    }
}

impl From<DmdError> for CliError {
    fn from(e: DmdError) -> Self {
        match e {
            DmdError::InvalidConfig(_) | DmdError::InvalidTolerance(_) => {
                CliError::Usage(e.to_string())
            }
            DmdError::NonFinite(_)
            | DmdError::DimensionMismatch { .. }
            | DmdError::ZeroData
            | DmdError::RankDeficient { .. } => CliError::Data(e.to_string()),
            DmdError::Singular { .. }
            | DmdError::LossOfDefiniteness(_)
            | DmdError::NoConvergence(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<GenError> for CliError {
    fn from(e: GenError) -> Self {
        match e {
            GenError::InvalidParam(_) => CliError::Usage(e.to_string()),
            GenError::Unstable(_) => CliError::Numerical(e.to_string()),
        }
    }
}
