use serde::{Deserialize, Serialize};

use crate::error::{DmdError, Result};
use crate::linalg::{check_gs_tolerances, Orientation, PrecisionMode};

/// Floor on the in-span threshold. A direction accepted with relative residual
/// `γ` carries roundoff of order `ε/γ` out of the true span, which can exceed
/// `m·ε` for small `m`.
pub const TOL1_FLOOR: f64 = 1e-12;
pub const DEFAULT_TOL2: f64 = 0.1;
pub const DEFAULT_TOL3: f64 = 1e-10;

/// How a streaming state builds its initial factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitMethod {
    /// Column-by-column Gram-Schmidt.
    #[default]
    Sequential,
    /// Truncated SVD of the initial block.
    Svd,
}

/// Tolerances, rank cap and storage options shared by all streaming states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Relative residual below which a vector counts as in-span.
    pub tol1: f64,
    /// Relative residual below which a second projection pass runs.
    pub tol2: f64,
    /// Relative cutoff for truncating small factors.
    pub tol3: f64,
    /// Cap on basis columns; `None` lets the basis grow.
    pub max_rank: Option<usize>,
    pub orientation: Orientation,
    pub precision: PrecisionMode,
    /// Also cap the Y-side basis of two-basis states.
    pub y_rank_cap: bool,
    pub init: InitMethod,
}

impl StreamConfig {
    /// Defaults for snapshots of length `m` stored at `precision`.
    pub fn for_dimension(m: usize, precision: PrecisionMode) -> Self {
        Self {
            tol1: (m as f64 * precision.epsilon()).clamp(TOL1_FLOOR, 0.05),
            tol2: DEFAULT_TOL2,
            tol3: DEFAULT_TOL3,
            max_rank: None,
            orientation: Orientation::Upper,
            precision,
            y_rank_cap: true,
            init: InitMethod::Sequential,
        }
    }

    pub fn with_max_rank(mut self, r: usize) -> Self {
        self.max_rank = Some(r);
        self
    }

    pub fn with_orientation(mut self, o: Orientation) -> Self {
        self.orientation = o;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_gs_tolerances(self.tol1, self.tol2)?;
        if !(self.tol3 > 0.0 && self.tol3 < 1.0) {
            return Err(DmdError::InvalidTolerance(format!(
                "tol3 must lie in (0,1), got {:e}",
                self.tol3
            )));
        }
        if let Some(r) = self.max_rank {
            if r < 2 {
                return Err(DmdError::InvalidConfig(format!(
                    "rank cap must be at least 2, got {r}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn cap_reached(&self, columns: usize) -> bool {
        self.max_rank.is_some_and(|r| columns >= r)
    }

    /// Number of directions kept by a compression given the tolerance rank.
    pub(crate) fn compressed_rank(&self, tol_rank: usize) -> (usize, bool) {
        let cap = self.max_rank.map_or(usize::MAX, |r| r - 1);
        let rho = tol_rank.min(cap).max(1);
        (rho, rho < tol_rank)
    }
}
