use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};

/// Result of projecting a vector against an orthonormal basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GsOutcome {
    /// New unit direction, present only when the basis should grow.
    pub q: Option<DVector<f64>>,
    /// Coefficients of the input in the existing basis.
    pub g: DVector<f64>,
    /// Norm of the component outside the basis, zero when declared representable.
    pub gamma: f64,
    /// Whether the second projection pass ran.
    pub reorthogonalized: bool,
}

impl GsOutcome {
    pub fn expanded(&self) -> bool {
        self.q.is_some()
    }

    /// Coordinates of the input in the (possibly grown) basis.
    pub fn coefficients(&self) -> DVector<f64> {
        if self.expanded() {
            let mut c = self.g.clone().resize_vertically(self.g.len() + 1, 0.0);
            c[self.g.len()] = self.gamma;
            c
        } else {
            self.g.clone()
        }
    }
}

pub(crate) fn check_gs_tolerances(tol1: f64, tol2: f64) -> Result<()> {
    if !(tol1 > 0.0 && tol1 < tol2 && tol2 < 1.0) {
        return Err(DmdError::InvalidTolerance(format!(
            "need 0 < tol1 < tol2 < 1, got tol1={tol1:e}, tol2={tol2:e}"
        )));
    }
    Ok(())
}

/// Classical Gram-Schmidt step with at most one reorthogonalization pass.
///
/// A residual below `tol1 * |x|` is declared in-span. A residual between
/// `tol1` and `tol2` (relative) triggers exactly one more projection, after
/// which the residual is tested against `tol1` again. A basis that already
/// spans the whole space never grows.
pub fn gs_update(q: &DMatrix<f64>, x: &DVector<f64>, tol1: f64, tol2: f64) -> Result<GsOutcome> {
    check_gs_tolerances(tol1, tol2)?;
    ensure_len("gram-schmidt input length", q.nrows(), x.len())?;
    ensure_finite_slice(x.as_slice(), "gram-schmidt input")?;

    let k = q.ncols();
    let xnorm = x.norm();
    if xnorm == 0.0 {
        return Ok(GsOutcome {
            q: None,
            g: DVector::zeros(k),
            gamma: 0.0,
            reorthogonalized: false,
        });
    }

    let mut g = q.tr_mul(x);
    let mut r = x - q * &g;
    let gamma = r.norm();

    if gamma <= tol1 * xnorm || k >= q.nrows() {
        return Ok(GsOutcome {
            q: None,
            g,
            gamma: 0.0,
            reorthogonalized: false,
        });
    }
    if gamma > tol2 * xnorm {
        r /= gamma;
        return Ok(GsOutcome {
            q: Some(r),
            g,
            gamma,
            reorthogonalized: false,
        });
    }

    let g2 = q.tr_mul(&r);
    r -= q * &g2;
    g += g2;
    let gamma = r.norm();
    if gamma <= tol1 * xnorm {
        return Ok(GsOutcome {
            q: None,
            g,
            gamma: 0.0,
            reorthogonalized: true,
        });
    }
    r /= gamma;
    Ok(GsOutcome {
        q: Some(r),
        g,
        gamma,
        reorthogonalized: true,
    })
}

/// Appends a column to a matrix.
pub(crate) fn append_column(m: &DMatrix<f64>, col: &DVector<f64>) -> DMatrix<f64> {
    let n = m.ncols();
    let mut out = m.clone().resize_horizontally(n + 1, 0.0);
    out.set_column(n, col);
    out
}
