//! Online DMD for few observables (`m ≪ n`): the full `m × m` operator is
//! kept up to date as snapshot pairs arrive.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::batch::exact_dmd_matrix;
use crate::config::InitMethod;
use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};
use crate::linalg::{
    apply_rotations_to_columns, cholesky_append_row, cond_estimate_tri, norm2, qr_thin,
    retriangularize_append, spd_solve, tq_factor, trunc_svd, AppendMode, Orientation, Triangular,
};

/// Update family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnlineVariant {
    /// Explicit inverse Gram matrix updated by Sherman-Morrison.
    ShermanMorrison,
    /// Upper Cholesky factor of the Gram matrix updated by rotations.
    Cholesky,
    /// Triangular factor of `X` and `Y Q̃`, updated by rotations.
    Tq,
}

/// Options for [`OnlineState`].
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    pub init: InitMethod,
    pub orientation: Orientation,
    /// Sherman-Morrison: steps between factorization checks of the inverse Gram matrix.
    pub definiteness_check_every: usize,
    /// Sherman-Morrison: keep going after definiteness is lost instead of failing.
    pub continue_on_definiteness_loss: bool,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            init: InitMethod::Sequential,
            orientation: Orientation::Upper,
            definiteness_check_every: 50,
            continue_on_definiteness_loss: false,
        }
    }
}

#[derive(Clone, Debug)]
enum Factors {
    Sm { a: DMatrix<f64>, p: DMatrix<f64> },
    Chol { a: DMatrix<f64>, rx: Triangular },
    Tq { gyq: DMatrix<f64>, t: Triangular },
}

/// Outcome of one online update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OnlineStep {
    /// Sherman-Morrison lost positive definiteness on this step (only reported
    /// when continuing past the loss is allowed).
    pub definiteness_lost: bool,
}

/// Streaming state holding the full DMD operator of `m` observables.
#[derive(Clone, Debug)]
pub struct OnlineState {
    cfg: OnlineConfig,
    factors: Factors,
    steps: usize,
}

/// Inverse of the bordered Gram matrix `[G + g gᵀ, γ g; γ gᵀ, γ²]` from `G⁻¹`.
pub fn meyer_extend(g_inv: &DMatrix<f64>, g: &DVector<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    let n = g_inv.nrows();
    ensure_len("bordered inverse square", n, g_inv.ncols())?;
    ensure_len("bordered inverse column", n, g.len())?;
    ensure_finite_slice(g_inv.as_slice(), "inverse Gram matrix")?;
    ensure_finite_slice(g.as_slice(), "bordered inverse column")?;
    if !(gamma.is_finite() && gamma != 0.0) {
        return Err(DmdError::InvalidConfig(format!(
            "bordered inverse needs a nonzero weight, got {gamma:e}; use the rank-one branch"
        )));
    }
    let h = g_inv * g;
    let mut out = g_inv.clone().resize(n + 1, n + 1, 0.0);
    for i in 0..n {
        out[(i, n)] = -h[i] / gamma;
        out[(n, i)] = -h[i] / gamma;
    }
    out[(n, n)] = (1.0 + g.dot(&h)) / (gamma * gamma);
    Ok(out)
}

impl OnlineState {
    /// Initializes from a block with full row rank (`n0 ≥ m`).
    pub fn new(
        x0: &DMatrix<f64>,
        y0: &DMatrix<f64>,
        variant: OnlineVariant,
        cfg: OnlineConfig,
    ) -> Result<Self> {
        ensure_len("initial block rows", x0.nrows(), y0.nrows())?;
        ensure_len("initial block columns", x0.ncols(), y0.ncols())?;
        ensure_finite_slice(x0.as_slice(), "initial X block")?;
        ensure_finite_slice(y0.as_slice(), "initial Y block")?;
        if cfg.definiteness_check_every == 0 {
            return Err(DmdError::InvalidConfig(
                "definiteness check interval must be positive".into(),
            ));
        }
        let m = x0.nrows();
        if x0.ncols() < m {
            return Err(DmdError::RankDeficient {
                rank: x0.ncols(),
                required: m,
            });
        }
        let factors = match variant {
            OnlineVariant::Tq => {
                let (t, qt) = tq_factor(x0, cfg.orientation)?;
                check_full_rank(&t)?;
                Factors::Tq { gyq: y0 * qt, t }
            }
            OnlineVariant::ShermanMorrison | OnlineVariant::Cholesky => {
                let (q, r) = qr_thin(&x0.transpose())?;
                check_full_rank(&r)?;
                let a = match cfg.init {
                    // X0ᵀ = Q R  ⇒  A0 Rᵀ = Y0 Q
                    InitMethod::Sequential => r.right_divide_transpose(&(y0 * q))?,
                    InitMethod::Svd => y0 * pinv(x0)?,
                };
                if variant == OnlineVariant::Cholesky {
                    Factors::Chol { a, rx: r }
                } else {
                    let p = match cfg.init {
                        InitMethod::Sequential => {
                            let rinv_t = r.solve_matrix(&DMatrix::identity(m, m))?;
                            &rinv_t * rinv_t.transpose()
                        }
                        InitMethod::Svd => {
                            let xp = pinv(x0)?;
                            xp.tr_mul(&xp)
                        }
                    };
                    Factors::Sm { a, p }
                }
            }
        };
        Ok(Self {
            cfg,
            factors,
            steps: 0,
        })
    }

    pub fn variant(&self) -> OnlineVariant {
        match self.factors {
            Factors::Sm { .. } => OnlineVariant::ShermanMorrison,
            Factors::Chol { .. } => OnlineVariant::Cholesky,
            Factors::Tq { .. } => OnlineVariant::Tq,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.factors {
            Factors::Sm { a, .. } | Factors::Chol { a, .. } => a.nrows(),
            Factors::Tq { gyq, .. } => gyq.nrows(),
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// The current operator. For the TQ variant this is a triangular solve.
    pub fn operator(&self) -> Result<DMatrix<f64>> {
        match &self.factors {
            Factors::Sm { a, .. } | Factors::Chol { a, .. } => Ok(a.clone()),
            Factors::Tq { gyq, t } => t.right_divide(gyq),
        }
    }

    /// The inverse Gram matrix of the Sherman-Morrison variant.
    pub fn inverse_gram(&self) -> Option<&DMatrix<f64>> {
        match &self.factors {
            Factors::Sm { p, .. } => Some(p),
            _ => None,
        }
    }

    pub fn x_factor(&self) -> Option<&Triangular> {
        match &self.factors {
            Factors::Chol { rx, .. } => Some(rx),
            Factors::Tq { t, .. } => Some(t),
            Factors::Sm { .. } => None,
        }
    }

    /// Condition estimate of the X-side factor (of the inverse Gram matrix for Sherman-Morrison).
    pub fn cond_estimate(&self) -> f64 {
        match &self.factors {
            Factors::Sm { p, .. } => crate::linalg::cond2(p),
            Factors::Chol { rx, .. } => cond_estimate_tri(rx),
            Factors::Tq { t, .. } => cond_estimate_tri(t),
        }
    }

    /// Adds one snapshot pair.
    pub fn update(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<OnlineStep> {
        let m = self.dim();
        ensure_len("streamed x", m, x.len())?;
        ensure_len("streamed y", m, y.len())?;
        ensure_finite_slice(x.as_slice(), "streamed x")?;
        ensure_finite_slice(y.as_slice(), "streamed y")?;
        let mut step = OnlineStep::default();
        let next_step = self.steps + 1;
        match &mut self.factors {
            Factors::Sm { a, p } => {
                let z = &*p * x;
                let denom = 1.0 + x.dot(&z);
                let mut lost = !(denom > 0.0);
                let mut p_new = &*p - (&z * z.transpose()) / denom;
                p_new = (&p_new + p_new.transpose()) * 0.5;
                if next_step.is_multiple_of(self.cfg.definiteness_check_every)
                    && Cholesky::new(p_new.clone()).is_none()
                {
                    lost = true;
                }
                if lost {
                    if !self.cfg.continue_on_definiteness_loss {
                        return Err(DmdError::LossOfDefiniteness(format!(
                            "inverse Gram update at step {next_step}, 1 + xᵀPx = {denom:e}"
                        )));
                    }
                    warn!("lost positive definiteness at step {next_step}; continuing");
                    step.definiteness_lost = true;
                }
                let resid = y - &*a * x;
                *a += (resid * z.transpose()) / denom;
                *p = p_new;
            }
            Factors::Chol { a, rx } => {
                let pv = spd_solve(rx, x)?;
                let gamma = 1.0 / (1.0 + x.dot(&pv));
                let resid = y - &*a * x;
                let r_new = cholesky_append_row(rx, x)?;
                *a += (resid * pv.transpose()) * gamma;
                *rx = r_new;
            }
            Factors::Tq { gyq, t } => {
                let out = retriangularize_append(t, x, AppendMode::Absorb)?;
                let mut bar = gyq.clone().resize(m, m + 1, 0.0);
                bar.set_column(m, y);
                apply_rotations_to_columns(&mut bar, &out.rotations);
                *gyq = bar.remove_column(m);
                *t = out.factor;
            }
        }
        self.steps = next_step;
        Ok(step)
    }
}

fn check_full_rank(t: &Triangular) -> Result<()> {
    let d = t.diagonal();
    let max = d.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let n = d.len();
    let cut = max * n as f64 * f64::EPSILON;
    let rank = d.iter().filter(|v| v.abs() > cut).count();
    if max == 0.0 || rank < n {
        return Err(DmdError::RankDeficient { rank, required: n });
    }
    Ok(())
}

/// Moore-Penrose pseudoinverse through the SVD.
fn pinv(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = trunc_svd(x, f64::EPSILON * x.nrows().max(x.ncols()) as f64)?;
    let k = svd.rank;
    let mut v = svd.v.columns(0, k).into_owned();
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col /= svd.sigma[j];
    }
    Ok(v * svd.u.columns(0, k).transpose())
}

/// Relative two-norm distance of an operator from the least-squares operator of the data.
pub fn operator_error(a: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let reference = exact_dmd_matrix(x, y)?;
    let norm = norm2(&reference);
    let diff = norm2(&(a - &reference));
    Ok(if norm > 0.0 { diff / norm } else { diff })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(v))
    }

    #[test]
    fn identity_block_gives_y() {
        let x = DMatrix::identity(3, 3);
        let y = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64);
        for v in [
            OnlineVariant::ShermanMorrison,
            OnlineVariant::Cholesky,
            OnlineVariant::Tq,
        ] {
            let s = OnlineState::new(&x, &y, v, OnlineConfig::default()).unwrap();
            assert!((s.operator().unwrap() - &y).norm() < 1e-14, "{v:?}");
        }
        let s = OnlineState::new(
            &(x * 2.0),
            &y,
            OnlineVariant::ShermanMorrison,
            OnlineConfig::default(),
        )
        .unwrap();
        assert!((s.inverse_gram().unwrap() - DMatrix::identity(3, 3) / 4.0).norm() < 1e-15);
    }

    #[test]
    fn hand_cholesky_update() {
        let x = DMatrix::identity(2, 2);
        let mut s =
            OnlineState::new(&x, &x, OnlineVariant::Cholesky, OnlineConfig::default()).unwrap();
        s.update(
            &DVector::from_vec(vec![1.0, 0.0]),
            &DVector::from_vec(vec![2.0, 0.0]),
        )
        .unwrap();
        let a = s.operator().unwrap();
        assert!((a[(0, 0)] - 1.5).abs() < 1e-15);
        let r = s.x_factor().unwrap().matrix();
        assert!((r - diag(&[2f64.sqrt(), 1.0])).norm() < 1e-15);
    }

    #[test]
    fn scalar_tq_norm() {
        let x = DMatrix::from_element(1, 1, 2.0);
        let mut s = OnlineState::new(&x, &x, OnlineVariant::Tq, OnlineConfig::default()).unwrap();
        s.update(
            &DVector::from_element(1, 1.0),
            &DVector::from_element(1, 7.0),
        )
        .unwrap();
        assert!((s.x_factor().unwrap().matrix()[(0, 0)] - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_pair_leaves_state() {
        let x = diag(&[1.0, 2.0]);
        let y = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        for v in [
            OnlineVariant::ShermanMorrison,
            OnlineVariant::Cholesky,
            OnlineVariant::Tq,
        ] {
            let mut s = OnlineState::new(&x, &y, v, OnlineConfig::default()).unwrap();
            let before = s.operator().unwrap();
            s.update(&DVector::zeros(2), &DVector::zeros(2)).unwrap();
            assert!((s.operator().unwrap() - before).norm() < 1e-15, "{v:?}");
        }
    }

    #[test]
    fn meyer_examples() {
        let out = meyer_extend(&DMatrix::identity(1, 1), &DVector::zeros(1), 2.0).unwrap();
        assert_eq!(out, diag(&[1.0, 0.25]));
        let out = meyer_extend(
            &DMatrix::identity(2, 2),
            &DVector::from_vec(vec![1.0, 0.0]),
            1.0,
        )
        .unwrap();
        assert_eq!(out[(2, 2)], 2.0);
        assert!(meyer_extend(&DMatrix::identity(1, 1), &DVector::zeros(1), 0.0).is_err());
    }

    #[test]
    fn rank_deficient_init() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let err =
            OnlineState::new(&x, &x, OnlineVariant::Cholesky, OnlineConfig::default()).unwrap_err();
        assert!(matches!(err, DmdError::RankDeficient { required: 2, .. }));
    }
}
