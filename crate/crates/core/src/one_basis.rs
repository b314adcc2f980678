//! One-basis streaming DMD for a single trajectory, where `y_j = x_{j+1}`.
//!
//! A single orthonormal basis `Q` spans every snapshot seen so far. Its first
//! `rx` columns span the X snapshots; at most one extra column holds the part
//! of the latest snapshot outside that span. The latest snapshot's coordinates
//! are held back and enter the X-side factor only when the next snapshot
//! arrives.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::config::{InitMethod, StreamConfig};
use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};
use crate::linalg::{
    append_column, apply_rotations_to_columns, apply_rotations_to_vector, cholesky_append_row,
    cond_estimate_tri, gs_update, qr_thin, retriangularize_append, tq_factor, trunc_svd,
    trunc_sym_eig, AppendMode, Orientation, PrecisionMode, Triangular, C64,
};
use crate::ritz::{assemble, BasisTag, RitzSet};
use crate::two_basis::{check_triangular, gram_right_divide, ortho_defect};

/// Small-factor representation carried by a [`OneBasisState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OneBasisBackend {
    /// `Gx = X̃X̃ᵀ` and `Gyx = ỸX̃ᵀ`.
    Gram,
    /// `X̃ = T Q̃ᵀ` with `Ỹ Q̃` and a pending column for the held-back snapshot.
    Tq,
    /// The projected operator itself, updated by rank-one corrections.
    Exp,
}

#[derive(Clone, Debug)]
enum Factors {
    Gram {
        gx: DMatrix<f64>,
        gyx: DMatrix<f64>,
    },
    Tq {
        t: Triangular,
        gyq: DMatrix<f64>,
        /// Row of the right factor that the next `Ỹ` column will occupy.
        pending: DVector<f64>,
    },
    Exp {
        a: DMatrix<f64>,
        rx: Triangular,
    },
}

/// What one streamed snapshot did to the state.
#[derive(Clone, Debug, Default)]
pub struct OneBasisStep {
    pub gamma: f64,
    /// Coordinates of the new snapshot in `Q` after the update.
    pub coeffs: DVector<f64>,
    /// Rotation applied to `Q` before the new snapshot was inserted (old r × new r).
    pub compression: Option<DMatrix<f64>>,
    pub forced_truncation: bool,
    pub reorthogonalized: bool,
}

/// Compressed representation of a snapshot trajectory.
#[derive(Clone, Debug)]
pub struct OneBasisState {
    cfg: StreamConfig,
    q: DMatrix<f64>,
    rx: usize,
    last: DVector<f64>,
    factors: Factors,
    snapshots: usize,
}

impl OneBasisState {
    /// Builds the state from the first snapshots (at least two columns).
    pub fn new(s0: &DMatrix<f64>, cfg: StreamConfig, backend: OneBasisBackend) -> Result<Self> {
        cfg.validate()?;
        let n0 = s0.ncols();
        if n0 < 2 {
            return Err(DmdError::InvalidConfig(format!(
                "need at least two initial snapshots, got {n0}"
            )));
        }
        ensure_finite_slice(s0.as_slice(), "initial snapshots")?;
        if backend == OneBasisBackend::Exp && cfg.max_rank.is_some() {
            warn!("the operator-update backend does not truncate; ignoring the rank cap");
        }

        let mut q = DMatrix::zeros(s0.nrows(), 0);
        let mut coeffs = Vec::with_capacity(n0);
        let mut rx = 0;
        for (j, col) in s0.column_iter().enumerate() {
            let out = gs_update(&q, &col.into_owned(), cfg.tol1, cfg.tol2)?;
            coeffs.push(out.coefficients());
            if let Some(qn) = out.q {
                q = append_column(&q, &qn);
            }
            if j + 2 == n0 {
                rx = q.ncols();
            }
        }
        if rx == 0 {
            return Err(DmdError::ZeroData);
        }
        let r = q.ncols();
        let mut c = DMatrix::zeros(r, n0);
        for (j, v) in coeffs.iter().enumerate() {
            c.view_mut((0, j), (v.len(), 1)).copy_from(v);
        }
        if cfg.init == InitMethod::Svd {
            let xt = c.view((0, 0), (rx, n0 - 1)).into_owned();
            let svd = trunc_svd(&xt, cfg.tol3)?;
            let k = svd.sigma.len();
            let u = svd.u.columns(0, k).into_owned();
            let qx = q.columns(0, rx) * &u;
            q.columns_mut(0, rx).copy_from(&qx);
            let top = u.tr_mul(&c.rows(0, rx));
            c.rows_mut(0, rx).copy_from(&top);
        }
        let xt = c.view((0, 0), (rx, n0 - 1)).into_owned();
        let yt = c.columns(1, n0 - 1).into_owned();
        let last = c.column(n0 - 1).into_owned();

        let factors = match backend {
            OneBasisBackend::Gram => Factors::Gram {
                gx: &xt * xt.transpose(),
                gyx: &yt * xt.transpose(),
            },
            OneBasisBackend::Tq => {
                let (t, qt) = tq_factor(&xt, cfg.orientation)?;
                Factors::Tq {
                    t,
                    gyq: &yt * qt,
                    pending: DVector::zeros(0),
                }
            }
            OneBasisBackend::Exp => {
                // X̃ᵀ = Q R, so Ã = Ỹ Q R⁻ᵀ and RᵀR = X̃X̃ᵀ
                let (qf, r) = qr_thin(&xt.transpose())?;
                check_triangular(&r, cfg.tol3)?;
                Factors::Exp {
                    a: r.right_divide_transpose(&(&yt * qf))?,
                    rx: r,
                }
            }
        };
        let mut state = Self {
            cfg,
            q,
            rx,
            last,
            factors,
            snapshots: n0,
        };
        state.round_storage();
        Ok(state)
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn backend(&self) -> OneBasisBackend {
        match self.factors {
            Factors::Gram { .. } => OneBasisBackend::Gram,
            Factors::Tq { .. } => OneBasisBackend::Tq,
            Factors::Exp { .. } => OneBasisBackend::Exp,
        }
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Columns of `Q` spanning the X snapshots.
    pub fn rank_x(&self) -> usize {
        self.rx
    }

    pub fn rank(&self) -> usize {
        self.q.ncols()
    }

    pub fn snapshots(&self) -> usize {
        self.snapshots
    }

    /// Coordinates of the latest snapshot in `Q`.
    pub fn last_coeffs(&self) -> &DVector<f64> {
        &self.last
    }

    /// X Gram matrix implied by the stored factors.
    pub fn gram_x(&self) -> DMatrix<f64> {
        match &self.factors {
            Factors::Gram { gx, .. } => gx.clone(),
            Factors::Tq { t, .. } => t.matrix() * t.matrix().transpose(),
            Factors::Exp { rx, .. } => rx.matrix().tr_mul(rx.matrix()),
        }
    }

    pub fn x_factor(&self) -> Option<&Triangular> {
        match &self.factors {
            Factors::Tq { t, .. } => Some(t),
            Factors::Exp { rx, .. } => Some(rx),
            Factors::Gram { .. } => None,
        }
    }

    /// Condition estimate of the small X factor (Gram matrix for Gram and Exp, `T` for TQ).
    pub fn cond_estimate(&self) -> f64 {
        match &self.factors {
            Factors::Gram { gx, .. } => crate::linalg::cond2(gx),
            Factors::Tq { t, .. } => cond_estimate_tri(t),
            Factors::Exp { rx, .. } => cond_estimate_tri(rx).powi(2),
        }
    }

    pub fn ortho_defect(&self) -> f64 {
        ortho_defect(&self.q)
    }

    fn round_storage(&mut self) {
        let p = self.cfg.precision;
        if p == PrecisionMode::Full64 {
            return;
        }
        p.round_matrix_in_place(&mut self.q);
        p.round_vector_in_place(&mut self.last);
        match &mut self.factors {
            Factors::Gram { gx, gyx } => {
                p.round_matrix_in_place(gx);
                p.round_matrix_in_place(gyx);
            }
            Factors::Tq { t, gyq, pending } => {
                p.round_matrix_in_place(t.matrix_mut());
                p.round_matrix_in_place(gyq);
                p.round_vector_in_place(pending);
            }
            Factors::Exp { a, rx } => {
                p.round_matrix_in_place(a);
                p.round_matrix_in_place(rx.matrix_mut());
            }
        }
    }

    /// Streams the next snapshot. The state is unchanged if an error is returned.
    pub fn add_snapshot(&mut self, s: &DVector<f64>) -> Result<OneBasisStep> {
        ensure_len("streamed snapshot", self.q.nrows(), s.len())?;
        ensure_finite_slice(s.as_slice(), "streamed snapshot")?;
        let mut work = self.clone();
        let step = match work.factors {
            Factors::Exp { .. } => work.step_exp(s)?,
            _ => work.step_factored(s)?,
        };
        work.snapshots += 1;
        work.round_storage();
        *self = work;
        Ok(step)
    }

    /// Gram and TQ update: fold the held-back snapshot into the X factor,
    /// compress if the cap is reached, then insert the new snapshot.
    fn step_factored(&mut self, s: &DVector<f64>) -> Result<OneBasisStep> {
        let r = self.q.ncols();
        let grows = r > self.rx;
        match &mut self.factors {
            Factors::Gram { gx, gyx } => {
                if grows {
                    *gx = gx.clone().resize(r, r, 0.0);
                    *gyx = gyx.clone().resize(gyx.nrows(), r, 0.0);
                }
                *gx += &self.last * self.last.transpose();
            }
            Factors::Tq { t, gyq, pending } => {
                let rx = t.dim();
                let head = self.last.rows(0, rx).into_owned();
                let mode = if grows {
                    AppendMode::Border {
                        gamma: self.last[rx],
                    }
                } else {
                    AppendMode::Absorb
                };
                let out = retriangularize_append(t, &head, mode)?;
                let mut bar = gyq.clone().resize(gyq.nrows(), rx + 1, 0.0);
                let mut p = DVector::zeros(rx + 1);
                p[rx] = 1.0;
                apply_rotations_to_columns(&mut bar, &out.rotations);
                apply_rotations_to_vector(&mut p, &out.rotations);
                if out.dropped_last {
                    bar = bar.remove_column(rx);
                    p = p.remove_row(rx);
                }
                *t = out.factor;
                *gyq = bar;
                *pending = p;
            }
            Factors::Exp { .. } => unreachable!("exp backend has its own step"),
        }
        self.rx = r;

        let mut step = OneBasisStep::default();
        if self.cfg.cap_reached(r) {
            let (omega, forced) = self.compress()?;
            if forced {
                warn!("rank cap forced truncation below the tolerance rank");
            }
            step.compression = Some(omega);
            step.forced_truncation = forced;
        }

        let gs = gs_update(&self.q, s, self.cfg.tol1, self.cfg.tol2)?;
        let xt = gs.coefficients();
        let rows = xt.len();
        match &mut self.factors {
            Factors::Gram { gyx, .. } => {
                *gyx = gyx.clone().resize(rows, gyx.ncols(), 0.0) + &xt * self.last.transpose();
            }
            Factors::Tq { gyq, pending, .. } => {
                *gyq = gyq.clone().resize(rows, gyq.ncols(), 0.0) + &xt * pending.transpose();
            }
            Factors::Exp { .. } => unreachable!(),
        }
        if let Some(qn) = &gs.q {
            self.q = append_column(&self.q, qn);
        }
        step.gamma = gs.gamma;
        step.reorthogonalized = gs.reorthogonalized;
        step.coeffs = xt.clone();
        self.last = xt;
        Ok(step)
    }

    /// Truncates `Q` (which equals its X prefix here) to at most `r̂ − 1` columns.
    fn compress(&mut self) -> Result<(DMatrix<f64>, bool)> {
        let tol3 = self.cfg.tol3;
        let (omega, forced) = match &mut self.factors {
            Factors::Gram { gx, gyx } => {
                let eig = trunc_sym_eig(gx, tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(eig.rank);
                let om = eig.vectors.columns(0, rho).into_owned();
                *gx = DMatrix::from_diagonal(&eig.values.rows(0, rho).into_owned());
                *gyx = om.tr_mul(&(&*gyx * &om));
                (om, forced)
            }
            Factors::Tq { t, gyq, pending } => {
                let svd = trunc_svd(t.matrix(), tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(svd.rank);
                let u = svd.u.columns(0, rho).into_owned();
                let v = svd.v.columns(0, rho).into_owned();
                let sig: Vec<f64> = svd.sigma.iter().take(rho).copied().collect();
                *t = Triangular::from_diagonal(&sig, t.orientation());
                *gyq = u.tr_mul(&(&*gyq * &v));
                *pending = v.tr_mul(pending);
                (u, forced)
            }
            Factors::Exp { .. } => unreachable!("exp backend does not compress"),
        };
        self.q = &self.q * &omega;
        self.last = omega.tr_mul(&self.last);
        self.rx = omega.ncols();
        Ok((omega, forced))
    }

    /// Rank-one update of the projected operator and its X factor.
    fn step_exp(&mut self, s: &DVector<f64>) -> Result<OneBasisStep> {
        let r = self.q.ncols();
        let rx_dim = self.rx;
        let gx = self.last.rows(0, rx_dim).into_owned();
        let gamma_x = if r > rx_dim { self.last[rx_dim] } else { 0.0 };
        let gs = gs_update(&self.q, s, self.cfg.tol1, self.cfg.tol2)?;
        let gy = gs.g.clone();
        let gamma_y = gs.gamma;
        let tol3 = self.cfg.tol3;

        let Factors::Exp { a, rx } = &mut self.factors else {
            unreachable!()
        };
        let d = &*a * &gx - &gy;
        let (new_a, new_rx) = if gamma_x > 0.0 {
            let mut na = a.clone().resize(r, rx_dim + 1, 0.0);
            na.set_column(rx_dim, &(-&d / gamma_x));
            if gamma_y > 0.0 {
                na = na.resize(r + 1, rx_dim + 1, 0.0);
                na[(r, rx_dim)] = gamma_y / gamma_x;
            }
            let padded = Triangular::from_matrix_unchecked(
                rx.matrix().clone().resize(r, r, 0.0),
                Orientation::Upper,
            );
            (na, cholesky_append_row(&padded, &self.last)?)
        } else {
            check_triangular(rx, tol3)?;
            let z = crate::linalg::spd_solve(rx, &gx)?;
            let alpha = 1.0 + gx.dot(&z);
            let mut na = &*a - (&d * z.transpose()) / alpha;
            if gamma_y > 0.0 {
                na = na.resize(r + 1, rx_dim, 0.0);
                let row = &z * (gamma_y / alpha);
                na.view_mut((r, 0), (1, rx_dim)).copy_from(&row.transpose());
            }
            (na, cholesky_append_row(rx, &gx)?)
        };
        *a = new_a;
        *rx = new_rx;
        self.rx = rx.dim();
        if let Some(qn) = &gs.q {
            self.q = append_column(&self.q, qn);
        }
        let xt = gs.coefficients();
        self.last = xt.clone();
        Ok(OneBasisStep {
            gamma: gamma_y,
            coeffs: xt,
            compression: None,
            forced_truncation: false,
            reorthogonalized: gs.reorthogonalized,
        })
    }

    /// The map `K` (r × rx): `A Qx = Q K` on the data; its top rx rows are the Rayleigh quotient.
    pub fn exact_map(&self) -> Result<DMatrix<f64>> {
        let tol3 = self.cfg.tol3;
        match &self.factors {
            Factors::Gram { gx, gyx } => gram_right_divide(gyx, gx, tol3),
            Factors::Tq { t, gyq, .. } => {
                check_triangular(t, tol3)?;
                t.right_divide(gyq)
            }
            Factors::Exp { a, .. } => Ok(a.clone()),
        }
    }

    pub fn rayleigh_quotient(&self) -> Result<DMatrix<f64>> {
        Ok(self.exact_map()?.rows(0, self.rx).into_owned())
    }

    /// Ritz pairs in the X prefix of `Q`; exact coefficients and residuals use the whole of `Q`.
    pub fn ritz(&self) -> Result<RitzSet> {
        let k = self.exact_map()?;
        let rx = self.rx;
        let b = k.rows(0, rx).into_owned();
        assemble(&b, &k, BasisTag::Qx, BasisTag::Q, |lam, w, wex| {
            let head: f64 = (0..rx).map(|i| (wex[i] - lam * w[i]).norm_sqr()).sum();
            let tail: f64 = (rx..wex.len()).map(|i| wex[i].norm_sqr()).sum();
            (head + tail).sqrt()
        })
    }
}

/// Residual of a Ritz pair when the new direction is the only contribution.
pub fn trailing_residual(k: &DMatrix<f64>, w: &DVector<C64>) -> f64 {
    let last = k.nrows() - 1;
    k.row(last)
        .iter()
        .zip(w.iter())
        .fold(C64::new(0.0, 0.0), |acc, (a, b)| acc + b * *a)
        .norm()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rotation_stream(n: usize) -> DMatrix<f64> {
        let th = 0.3_f64;
        DMatrix::from_fn(3, n, |i, j| match i {
            0 => (th * j as f64).cos(),
            1 => (th * j as f64).sin(),
            _ => 0.5_f64.powi(j as i32),
        })
    }

    #[test]
    fn recovers_rotation_and_decay_all_backends() {
        let s = rotation_stream(12);
        for backend in [
            OneBasisBackend::Gram,
            OneBasisBackend::Tq,
            OneBasisBackend::Exp,
        ] {
            let cfg = StreamConfig::for_dimension(3, PrecisionMode::Full64);
            let mut st = OneBasisState::new(&s.columns(0, 2).into_owned(), cfg, backend).unwrap();
            for j in 2..12 {
                st.add_snapshot(&s.column(j).into_owned()).unwrap();
            }
            let ritz = st.ritz().unwrap();
            let mut mods: Vec<f64> = ritz.eigenvalues.iter().map(|z| z.norm()).collect();
            mods.sort_by(f64::total_cmp);
            assert!((mods[0] - 0.5).abs() < 1e-10, "{backend:?} {mods:?}");
            assert!((mods[2] - 1.0).abs() < 1e-10, "{backend:?} {mods:?}");
            assert!(ritz.residuals.iter().all(|r| *r < 1e-10), "{backend:?}");
        }
    }

    #[test]
    fn trailing_residual_of_shift() {
        let k = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let w = DVector::from_vec(vec![C64::new(1.0, 0.0)]);
        assert_eq!(trailing_residual(&k, &w), 1.0);
    }

    #[test]
    fn shift_stream_residual_is_trailing_norm() {
        let s = DMatrix::from_columns(&[
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0, 0.0]),
        ]);
        let cfg = StreamConfig::for_dimension(3, PrecisionMode::Full64);
        let st = OneBasisState::new(&s, cfg, OneBasisBackend::Gram).unwrap();
        assert_eq!((st.rank_x(), st.rank()), (1, 2));
        let ritz = st.ritz().unwrap();
        assert_eq!(ritz.eigenvalues[0], C64::new(0.0, 0.0));
        assert!((ritz.residuals[0] - 1.0).abs() < 1e-15);
    }
}
