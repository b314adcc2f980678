//! Batch DMD via the truncated SVD of the snapshot matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_len, DmdError, Result};
use crate::linalg::{qr_thin, trunc_svd, C64};
use crate::ritz::{assemble, lift_vector, BasisTag, RitzSet};

/// Output of [`dmd_batch`].
#[derive(Clone, Debug)]
pub struct BatchDmd {
    pub ritz: RitzSet,
    /// Leading left singular vectors of `X`.
    pub uk: DMatrix<f64>,
    /// `Y Vk Σk⁻¹`.
    pub bk: DMatrix<f64>,
}

impl BatchDmd {
    pub fn rank(&self) -> usize {
        self.uk.ncols()
    }

    /// Residual of Ritz pair `i` recomputed from `uk` and `bk`.
    pub fn residual_of(&self, lambda: C64, w: &DVector<C64>) -> f64 {
        (lift_vector(&self.bk, w) - lift_vector(&self.uk, w) * lambda).norm()
    }
}

/// Rayleigh-Ritz extraction on the numerical range of `X`.
///
/// The rank is the number of singular values above `tol * σ₁`. Ritz
/// coefficients are in the `Uk` basis; exact DMD vectors are ambient.
pub fn dmd_batch(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> Result<BatchDmd> {
    ensure_len("batch rows", x.nrows(), y.nrows())?;
    ensure_len("batch columns", x.ncols(), y.ncols())?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("batch Y data"));
    }
    let svd = trunc_svd(x, tol)?;
    let k = svd.rank;
    if k == 0 {
        return Err(DmdError::ZeroData);
    }
    let uk = svd.u.columns(0, k).into_owned();
    let mut bk = y * svd.v.columns(0, k);
    for (j, mut col) in bk.column_iter_mut().enumerate() {
        col /= svd.sigma[j];
    }
    let sk = uk.tr_mul(&bk);
    let ritz = {
        let (uk_ref, bk_ref) = (&uk, &bk);
        assemble(&sk, bk_ref, BasisTag::Uk, BasisTag::Ambient, |lam, w, _| {
            (lift_vector(bk_ref, w) - lift_vector(uk_ref, w) * lam).norm()
        })?
    };
    Ok(BatchDmd { ritz, uk, bk })
}

/// The least-squares operator `Y X†` through triangular solves against a QR factor.
///
/// With at least as many snapshots as rows the factor comes from `Xᵀ`
/// (full row rank required); otherwise from `X` (full column rank required).
pub fn exact_dmd_matrix(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_len("operator rows", x.nrows(), y.nrows())?;
    ensure_len("operator columns", x.ncols(), y.ncols())?;
    let (m, n) = x.shape();
    if n >= m {
        // Xᵀ = Q R  ⇒  X† = Q R⁻ᵀ, so A Rᵀ = Y Q
        let (q, r) = qr_thin(&x.transpose())?;
        check_rank(&r.diagonal(), m, n)?;
        r.right_divide_transpose(&(y * q))
    } else {
        // X = Q R  ⇒  X† = R⁻¹ Qᵀ
        let (q, r) = qr_thin(x)?;
        check_rank(&r.diagonal(), n, m)?;
        Ok(r.right_divide(y)? * q.transpose())
    }
}

fn check_rank(diag: &DVector<f64>, required: usize, other: usize) -> Result<()> {
    let max = diag.iter().fold(0.0_f64, |a, d| a.max(d.abs()));
    if max == 0.0 {
        return Err(DmdError::ZeroData);
    }
    let cut = max * (required.max(other) as f64) * f64::EPSILON;
    let rank = diag.iter().filter(|d| d.abs() > cut).count();
    if rank < required {
        return Err(DmdError::RankDeficient { rank, required });
    }
    Ok(())
}
