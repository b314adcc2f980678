use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::DmdError;

/// Storage precision of streaming state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PrecisionMode {
    #[default]
    Full64,
    /// Arithmetic in binary64, stored entries rounded to binary32 after every update.
    Simulated32,
}

impl PrecisionMode {
    /// Unit roundoff of the storage format.
    pub fn epsilon(self) -> f64 {
        match self {
            PrecisionMode::Full64 => f64::EPSILON,
            PrecisionMode::Simulated32 => f32::EPSILON as f64,
        }
    }

    #[inline]
    pub fn round_scalar(self, v: f64) -> f64 {
        match self {
            PrecisionMode::Full64 => v,
            PrecisionMode::Simulated32 => v as f32 as f64,
        }
    }

    pub fn round_matrix_in_place(self, m: &mut DMatrix<f64>) {
        if self == PrecisionMode::Simulated32 {
            m.apply(|v| *v = *v as f32 as f64);
        }
    }

    pub fn round_vector_in_place(self, v: &mut DVector<f64>) {
        if self == PrecisionMode::Simulated32 {
            v.apply(|x| *x = *x as f32 as f64);
        }
    }
}

impl std::str::FromStr for PrecisionMode {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self, DmdError> {
        match s.to_ascii_lowercase().as_str() {
            "f64" | "full64" => Ok(PrecisionMode::Full64),
            "sim-f32" | "f32" | "simulated32" => Ok(PrecisionMode::Simulated32),
            other => Err(DmdError::InvalidConfig(format!(
                "unknown precision '{other}'"
            ))),
        }
    }
}

/// Copy of `m` rounded to the storage precision.
pub fn round_precision(m: &DMatrix<f64>, mode: PrecisionMode) -> DMatrix<f64> {
    let mut out = m.clone();
    mode.round_matrix_in_place(&mut out);
    out
}
