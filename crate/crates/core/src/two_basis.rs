//! Two-basis streaming DMD: separate orthonormal bases for the X and Y snapshots.

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};

use crate::config::{InitMethod, StreamConfig};
use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};
use crate::linalg::{
    append_column, apply_rotations_to_columns, apply_rotations_to_rows, cholesky_append_row,
    cond_estimate_tri, gram_chol_augment, gs_update, qr_thin, retriangularize_append,
    spd_right_divide, tq_factor, trunc_svd, trunc_sym_eig, AppendMode, GsOutcome, Orientation,
    PrecisionMode, Triangular, C64,
};
use crate::ritz::{assemble, BasisTag, RitzSet};

/// Small-factor representation carried by a [`TwoBasisState`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TwoBasisBackend {
    /// Cross-product Gram matrices.
    Gram,
    /// Triangular factor of the X coefficients plus `Ỹ Q̃`.
    Tq,
    /// Cholesky factor of the X Gram matrix.
    Cholesky,
}

#[derive(Clone, Debug)]
enum YSide {
    /// `Ỹ Q̃` (ry × rx).
    Product(DMatrix<f64>),
    /// `Ỹ = Ty Q̃yᵀ` kept as `Ty` and `Q̃yᵀ Q̃` so the Y basis can be truncated.
    Factored { ty: Triangular, qyx: DMatrix<f64> },
}

#[derive(Clone, Debug)]
enum Factors {
    Gram {
        gx: DMatrix<f64>,
        gy: DMatrix<f64>,
        gyx: DMatrix<f64>,
    },
    Tq {
        t: Triangular,
        y: YSide,
    },
    Cholesky {
        lx: Triangular,
        gy: DMatrix<f64>,
        gyx: DMatrix<f64>,
    },
}

/// What one streamed pair did to the state.
#[derive(Clone, Debug, Default)]
pub struct TwoBasisStep {
    pub gamma_x: f64,
    pub gamma_y: f64,
    /// Coordinates of the new `y` in the Y basis after the update.
    pub y_coeffs: DVector<f64>,
    /// Basis rotation applied to the X side before insertion (old rx × new rx).
    pub x_compression: Option<DMatrix<f64>>,
    /// Basis rotation applied to the Y side before insertion (old ry × new ry).
    pub y_compression: Option<DMatrix<f64>>,
    /// The cap forced a truncation below the tolerance rank.
    pub forced_truncation: bool,
    pub reorthogonalized: bool,
}

/// Compressed representation of a stream of snapshot pairs `(x, y)`.
#[derive(Clone, Debug)]
pub struct TwoBasisState {
    cfg: StreamConfig,
    qx: DMatrix<f64>,
    qy: DMatrix<f64>,
    qxy: DMatrix<f64>,
    factors: Factors,
    pairs: usize,
    skipped: usize,
}

fn coeff_matrix(cols: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        out.view_mut((0, j), (c.len(), 1)).copy_from(c);
    }
    out
}

/// Sequential Gram-Schmidt over the columns, returning the basis and staircase coefficients.
fn sequential_basis(
    data: &DMatrix<f64>,
    cfg: &StreamConfig,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let mut q = DMatrix::zeros(data.nrows(), 0);
    let mut cols = Vec::with_capacity(data.ncols());
    for col in data.column_iter() {
        let out = gs_update(&q, &col.into_owned(), cfg.tol1, cfg.tol2)?;
        cols.push(out.coefficients());
        if let Some(qn) = out.q {
            q = append_column(&q, &qn);
        }
    }
    let coeffs = coeff_matrix(&cols, q.ncols());
    Ok((q, coeffs))
}

/// Rotates a basis and its coefficients onto the left singular vectors of the coefficients.
fn svd_rotate(
    q: DMatrix<f64>,
    coeffs: DMatrix<f64>,
    tol3: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let svd = trunc_svd(&coeffs, tol3)?;
    let k = svd.sigma.len();
    let u = svd.u.columns(0, k).into_owned();
    Ok((&q * &u, u.tr_mul(&coeffs)))
}

fn pad(m: &DMatrix<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    m.clone().resize(rows, cols, 0.0)
}

pub(crate) fn extended(g: &GsOutcome) -> DVector<f64> {
    g.coefficients()
}

/// Solves against `Gx` through its spectral decomposition; errors when numerically singular.
pub(crate) fn gram_right_divide(
    b: &DMatrix<f64>,
    gx: &DMatrix<f64>,
    tol3: f64,
) -> Result<DMatrix<f64>> {
    let eig = trunc_sym_eig(gx, tol3)?;
    let n = eig.values.len();
    let top = eig.values.iter().next().copied().unwrap_or(0.0);
    let bottom = eig.values.iter().next_back().copied().unwrap_or(0.0);
    if n == 0 || eig.rank < n {
        let cond = if bottom > 0.0 {
            top / bottom
        } else {
            f64::INFINITY
        };
        return Err(DmdError::Singular { cond });
    }
    let mut scaled = b * &eig.vectors;
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col /= eig.values[j];
    }
    Ok(scaled * eig.vectors.transpose())
}

pub(crate) fn check_triangular(t: &Triangular, tol3: f64) -> Result<()> {
    let d = t.diagonal();
    let max = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if t.matrix().iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("triangular factor"));
    }
    if d.is_empty() || !(min > tol3 * max) {
        return Err(DmdError::Singular {
            cond: cond_estimate_tri(t),
        });
    }
    Ok(())
}

/// `‖Qy wex − λ Qx w‖` from the tracked cross-product `Qxy = QxᵀQy`, without lifting.
pub fn residual_lift_free(
    qxy: &DMatrix<f64>,
    lambda: C64,
    w: &DVector<C64>,
    wex: &DVector<C64>,
) -> f64 {
    let qre = qxy * wex.map(|z| z.re);
    let qim = qxy * wex.map(|z| z.im);
    let cross = w
        .iter()
        .zip(qre.iter().zip(qim.iter()))
        .fold(C64::new(0.0, 0.0), |acc, (wi, (a, b))| {
            acc + wi.conj() * C64::new(*a, *b)
        });
    let sq = wex.norm_squared() + lambda.norm_sqr() * w.norm_squared()
        - 2.0 * (lambda.conj() * cross).re;
    sq.max(0.0).sqrt()
}

impl TwoBasisState {
    /// Builds the state from an initial block of pairs (columns of `x0`, `y0`).
    ///
    /// Pairs whose `x` column is zero are skipped and counted.
    pub fn new(
        x0: &DMatrix<f64>,
        y0: &DMatrix<f64>,
        cfg: StreamConfig,
        backend: TwoBasisBackend,
    ) -> Result<Self> {
        cfg.validate()?;
        ensure_len("initial block rows", x0.nrows(), y0.nrows())?;
        ensure_len("initial block columns", x0.ncols(), y0.ncols())?;
        ensure_finite_slice(x0.as_slice(), "initial X block")?;
        ensure_finite_slice(y0.as_slice(), "initial Y block")?;

        let keep: Vec<usize> = (0..x0.ncols())
            .filter(|&j| x0.column(j).iter().any(|v| *v != 0.0))
            .collect();
        let skipped = x0.ncols() - keep.len();
        if skipped > 0 {
            warn!("skipped {skipped} zero snapshot pairs during initialization");
        }
        if keep.is_empty() {
            return Err(DmdError::ZeroData);
        }
        let x0 = x0.select_columns(&keep);
        let y0 = y0.select_columns(&keep);

        let (mut qx, mut xt) = sequential_basis(&x0, &cfg)?;
        let (mut qy, mut yt) = sequential_basis(&y0, &cfg)?;
        if cfg.init == InitMethod::Svd {
            (qx, xt) = svd_rotate(qx, xt, cfg.tol3)?;
            if qy.ncols() > 0 {
                (qy, yt) = svd_rotate(qy, yt, cfg.tol3)?;
            }
        }
        let qxy = qx.tr_mul(&qy);

        let factors = match backend {
            TwoBasisBackend::Gram => Factors::Gram {
                gx: &xt * xt.transpose(),
                gy: &yt * yt.transpose(),
                gyx: &yt * xt.transpose(),
            },
            TwoBasisBackend::Cholesky => {
                let (_, r) = qr_thin(&xt.transpose())?;
                Factors::Cholesky {
                    lx: r.transpose(),
                    gy: &yt * yt.transpose(),
                    gyx: &yt * xt.transpose(),
                }
            }
            TwoBasisBackend::Tq => {
                let (t, qt) = tq_factor(&xt, cfg.orientation)?;
                let y = if cfg.y_rank_cap && yt.nrows() > 0 {
                    let (ty, qty) = tq_factor(&yt, cfg.orientation)?;
                    YSide::Factored {
                        ty,
                        qyx: qty.tr_mul(&qt),
                    }
                } else {
                    YSide::Product(&yt * &qt)
                };
                Factors::Tq { t, y }
            }
        };

        let mut state = Self {
            cfg,
            qx,
            qy,
            qxy,
            factors,
            pairs: keep.len(),
            skipped,
        };
        state.round_storage();
        Ok(state)
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    pub fn backend(&self) -> TwoBasisBackend {
        match self.factors {
            Factors::Gram { .. } => TwoBasisBackend::Gram,
            Factors::Tq { .. } => TwoBasisBackend::Tq,
            Factors::Cholesky { .. } => TwoBasisBackend::Cholesky,
        }
    }

    pub fn qx(&self) -> &DMatrix<f64> {
        &self.qx
    }

    pub fn qy(&self) -> &DMatrix<f64> {
        &self.qy
    }

    pub fn qxy(&self) -> &DMatrix<f64> {
        &self.qxy
    }

    pub fn rank_x(&self) -> usize {
        self.qx.ncols()
    }

    pub fn rank_y(&self) -> usize {
        self.qy.ncols()
    }

    pub fn pairs(&self) -> usize {
        self.pairs
    }

    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// The X Gram matrix implied by the stored factors.
    pub fn gram_x(&self) -> DMatrix<f64> {
        match &self.factors {
            Factors::Gram { gx, .. } => gx.clone(),
            Factors::Cholesky { lx, .. } => lx.matrix() * lx.matrix().transpose(),
            Factors::Tq { t, .. } => t.matrix() * t.matrix().transpose(),
        }
    }

    /// Triangular X factor, when the backend keeps one.
    pub fn x_factor(&self) -> Option<&Triangular> {
        match &self.factors {
            Factors::Tq { t, .. } => Some(t),
            Factors::Cholesky { lx, .. } => Some(lx),
            Factors::Gram { .. } => None,
        }
    }

    /// Condition estimate of the small X factor: the Gram matrix for Gram and
    /// Cholesky backends, the triangular factor for TQ.
    pub fn cond_estimate(&self) -> f64 {
        match &self.factors {
            Factors::Gram { gx, .. } => crate::linalg::cond2(gx),
            Factors::Cholesky { lx, .. } => cond_estimate_tri(lx).powi(2),
            Factors::Tq { t, .. } => cond_estimate_tri(t),
        }
    }

    /// `max |QxᵀQx − I|` and the same for `Qy`, whichever is larger.
    pub fn ortho_defect(&self) -> f64 {
        ortho_defect(&self.qx).max(ortho_defect(&self.qy))
    }

    fn round_storage(&mut self) {
        let p = self.cfg.precision;
        if p == PrecisionMode::Full64 {
            return;
        }
        p.round_matrix_in_place(&mut self.qx);
        p.round_matrix_in_place(&mut self.qy);
        p.round_matrix_in_place(&mut self.qxy);
        match &mut self.factors {
            Factors::Gram { gx, gy, gyx } => {
                p.round_matrix_in_place(gx);
                p.round_matrix_in_place(gy);
                p.round_matrix_in_place(gyx);
            }
            Factors::Cholesky { lx, gy, gyx } => {
                p.round_matrix_in_place(lx.matrix_mut());
                p.round_matrix_in_place(gy);
                p.round_matrix_in_place(gyx);
            }
            Factors::Tq { t, y } => {
                p.round_matrix_in_place(t.matrix_mut());
                match y {
                    YSide::Product(g) => p.round_matrix_in_place(g),
                    YSide::Factored { ty, qyx } => {
                        p.round_matrix_in_place(ty.matrix_mut());
                        p.round_matrix_in_place(qyx);
                    }
                }
            }
        }
    }

    /// Streams one pair. The state is unchanged if an error is returned.
    pub fn add_pair(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<TwoBasisStep> {
        ensure_len("streamed x", self.qx.nrows(), x.len())?;
        ensure_len("streamed y", self.qy.nrows(), y.len())?;
        ensure_finite_slice(x.as_slice(), "streamed x")?;
        ensure_finite_slice(y.as_slice(), "streamed y")?;
        let mut work = self.clone();
        let step = work.apply_pair(x, y)?;
        *self = work;
        Ok(step)
    }

    fn apply_pair(&mut self, x: &DVector<f64>, y: &DVector<f64>) -> Result<TwoBasisStep> {
        let mut step = TwoBasisStep::default();
        if self.cfg.cap_reached(self.rank_x()) {
            let (omega, forced) = self.compress_x()?;
            step.x_compression = Some(omega);
            step.forced_truncation |= forced;
        }
        if self.cfg.y_rank_cap && self.cfg.cap_reached(self.rank_y()) && self.y_cap_supported() {
            let (omega, forced) = self.compress_y()?;
            step.y_compression = Some(omega);
            step.forced_truncation |= forced;
        }
        if step.forced_truncation {
            warn!("rank cap forced truncation below the tolerance rank");
        }

        let gx = gs_update(&self.qx, x, self.cfg.tol1, self.cfg.tol2)?;
        let gy = gs_update(&self.qy, y, self.cfg.tol1, self.cfg.tol2)?;
        step.gamma_x = gx.gamma;
        step.gamma_y = gy.gamma;
        step.reorthogonalized = gx.reorthogonalized || gy.reorthogonalized;
        step.y_coeffs = extended(&gy);

        self.update_factors(&gx, &gy)?;
        self.update_cross(&gx, &gy);
        if let Some(q) = &gx.q {
            self.qx = append_column(&self.qx, q);
        }
        if let Some(q) = &gy.q {
            self.qy = append_column(&self.qy, q);
        }
        self.pairs += 1;
        self.round_storage();
        self.cfg.precision.round_vector_in_place(&mut step.y_coeffs);
        Ok(step)
    }

    fn y_cap_supported(&self) -> bool {
        !matches!(
            self.factors,
            Factors::Tq {
                y: YSide::Product(_),
                ..
            }
        )
    }

    fn update_factors(&mut self, gxo: &GsOutcome, gyo: &GsOutcome) -> Result<()> {
        let xt = extended(gxo);
        let yt = extended(gyo);
        let (rx, ry) = (xt.len(), yt.len());
        match &mut self.factors {
            Factors::Gram { gx, gy, gyx } => {
                *gx = pad(gx, rx, rx) + &xt * xt.transpose();
                *gy = pad(gy, ry, ry) + &yt * yt.transpose();
                *gyx = pad(gyx, ry, rx) + &yt * xt.transpose();
            }
            Factors::Cholesky { lx, gy, gyx } => {
                let upper = cholesky_append_row(&lx.transpose(), &gxo.g)?;
                let mut l = upper.transpose();
                if gxo.expanded() {
                    l = gram_chol_augment(&l, &gxo.g, gxo.gamma)?;
                }
                *lx = l;
                *gy = pad(gy, ry, ry) + &yt * yt.transpose();
                *gyx = pad(gyx, ry, rx) + &yt * xt.transpose();
            }
            Factors::Tq { t, y } => {
                let mode_x = if gxo.expanded() {
                    AppendMode::Border { gamma: gxo.gamma }
                } else {
                    AppendMode::Absorb
                };
                let tx = retriangularize_append(t, &gxo.g, mode_x)?;
                let rx_old = t.dim();
                match y {
                    YSide::Product(gyq) => {
                        let mut bar = pad(gyq, ry, rx_old + 1);
                        bar.set_column(rx_old, &yt);
                        apply_rotations_to_columns(&mut bar, &tx.rotations);
                        if tx.dropped_last {
                            bar = bar.remove_column(rx_old);
                        }
                        *gyq = bar;
                    }
                    YSide::Factored { ty, qyx } => {
                        let mode_y = if gyo.expanded() {
                            AppendMode::Border { gamma: gyo.gamma }
                        } else {
                            AppendMode::Absorb
                        };
                        let ry_old = ty.dim();
                        let tyn = retriangularize_append(ty, &gyo.g, mode_y)?;
                        let mut bar = pad(qyx, ry_old + 1, rx_old + 1);
                        bar[(ry_old, rx_old)] = 1.0;
                        apply_rotations_to_columns(&mut bar, &tx.rotations);
                        apply_rotations_to_rows(&mut bar, &tyn.rotations);
                        if tx.dropped_last {
                            bar = bar.remove_column(rx_old);
                        }
                        if tyn.dropped_last {
                            bar = bar.remove_row(ry_old);
                        }
                        *qyx = bar;
                        *ty = tyn.factor;
                    }
                }
                *t = tx.factor;
            }
        }
        Ok(())
    }

    fn update_cross(&mut self, gxo: &GsOutcome, gyo: &GsOutcome) {
        let (rx, ry) = self.qxy.shape();
        let rx_new = rx + usize::from(gxo.expanded());
        let ry_new = ry + usize::from(gyo.expanded());
        let mut out = pad(&self.qxy, rx_new, ry_new);
        if let Some(qy) = &gyo.q {
            let col = self.qx.tr_mul(qy);
            out.view_mut((0, ry), (rx, 1)).copy_from(&col);
        }
        if let Some(qx) = &gxo.q {
            let row = self.qy.tr_mul(qx);
            out.view_mut((rx, 0), (1, ry)).copy_from(&row.transpose());
            if let Some(qy) = &gyo.q {
                out[(rx, ry)] = qx.dot(qy);
            }
        }
        self.qxy = out;
    }

    /// Truncates the X basis to at most `r̂ − 1` columns; returns the rotation and whether the cap forced it.
    fn compress_x(&mut self) -> Result<(DMatrix<f64>, bool)> {
        let tol3 = self.cfg.tol3;
        let (omega, forced) = match &mut self.factors {
            Factors::Gram { gx, gyx, .. } => {
                let eig = trunc_sym_eig(gx, tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(eig.rank);
                let om = eig.vectors.columns(0, rho).into_owned();
                *gx = DMatrix::from_diagonal(&eig.values.rows(0, rho).into_owned());
                *gyx = &*gyx * &om;
                (om, forced)
            }
            Factors::Cholesky { lx, gyx, .. } => {
                let g = lx.matrix() * lx.matrix().transpose();
                let eig = trunc_sym_eig(&g, tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(eig.rank);
                let om = eig.vectors.columns(0, rho).into_owned();
                let d: Vec<f64> = eig
                    .values
                    .iter()
                    .take(rho)
                    .map(|v| v.max(0.0).sqrt())
                    .collect();
                *lx = Triangular::from_diagonal(&d, Orientation::Lower);
                *gyx = &*gyx * &om;
                (om, forced)
            }
            Factors::Tq { t, y } => {
                let svd = trunc_svd(t.matrix(), tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(svd.rank);
                let u = svd.u.columns(0, rho).into_owned();
                let v = svd.v.columns(0, rho).into_owned();
                let sig: Vec<f64> = svd.sigma.iter().take(rho).copied().collect();
                *t = Triangular::from_diagonal(&sig, t.orientation());
                match y {
                    YSide::Product(g) => *g = &*g * &v,
                    YSide::Factored { qyx, .. } => *qyx = &*qyx * &v,
                }
                (u, forced)
            }
        };
        self.qx = &self.qx * &omega;
        self.qxy = omega.tr_mul(&self.qxy);
        Ok((omega, forced))
    }

    fn compress_y(&mut self) -> Result<(DMatrix<f64>, bool)> {
        let tol3 = self.cfg.tol3;
        let (omega, forced) = match &mut self.factors {
            Factors::Gram { gy, gyx, .. } | Factors::Cholesky { gy, gyx, .. } => {
                let eig = trunc_sym_eig(gy, tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(eig.rank);
                let om = eig.vectors.columns(0, rho).into_owned();
                *gy = DMatrix::from_diagonal(&eig.values.rows(0, rho).into_owned());
                *gyx = om.tr_mul(gyx);
                (om, forced)
            }
            Factors::Tq {
                y: YSide::Factored { ty, qyx },
                ..
            } => {
                let svd = trunc_svd(ty.matrix(), tol3)?;
                let (rho, forced) = self.cfg.compressed_rank(svd.rank);
                let u = svd.u.columns(0, rho).into_owned();
                let v = svd.v.columns(0, rho).into_owned();
                let sig: Vec<f64> = svd.sigma.iter().take(rho).copied().collect();
                *ty = Triangular::from_diagonal(&sig, ty.orientation());
                *qyx = v.tr_mul(qyx);
                (u, forced)
            }
            Factors::Tq {
                y: YSide::Product(_),
                ..
            } => {
                return Err(DmdError::InvalidConfig(
                    "Y-side truncation needs the factored Y representation".into(),
                ))
            }
        };
        self.qy = &self.qy * &omega;
        self.qxy = &self.qxy * &omega;
        Ok((omega, forced))
    }

    /// The map `K` (ry × rx) with `Ã = Qxy K` and exact coefficients `K w`.
    pub fn exact_map(&self) -> Result<DMatrix<f64>> {
        let tol3 = self.cfg.tol3;
        match &self.factors {
            Factors::Gram { gx, gyx, .. } => gram_right_divide(gyx, gx, tol3),
            Factors::Cholesky { lx, gyx, .. } => {
                let ratio = lx.diagonal_ratio();
                if !(ratio * ratio * tol3 < 1.0) {
                    return Err(DmdError::Singular {
                        cond: cond_estimate_tri(lx).powi(2),
                    });
                }
                spd_right_divide(lx, gyx)
            }
            Factors::Tq { t, y } => {
                check_triangular(t, tol3)?;
                let gyq = match y {
                    YSide::Product(g) => g.clone(),
                    YSide::Factored { ty, qyx } => ty.matrix() * qyx,
                };
                t.right_divide(&gyq)
            }
        }
    }

    /// Rayleigh quotient `QxᵀAQx` of the accumulated data.
    pub fn rayleigh_quotient(&self) -> Result<DMatrix<f64>> {
        Ok(&self.qxy * self.exact_map()?)
    }

    /// Ritz pairs with lift-free residuals and exact coefficients in the Y basis.
    pub fn ritz(&self) -> Result<RitzSet> {
        let k = self.exact_map()?;
        let a = &self.qxy * &k;
        let qxy = &self.qxy;
        assemble(&a, &k, BasisTag::Qx, BasisTag::Qy, |lam, w, wex| {
            residual_lift_free(qxy, lam, w, wex)
        })
    }
}

pub(crate) fn ortho_defect(q: &DMatrix<f64>) -> f64 {
    if q.ncols() == 0 {
        return 0.0;
    }
    let g = q.tr_mul(q) - DMatrix::identity(q.ncols(), q.ncols());
    g.amax()
}

/// Lower Cholesky factor of a symmetric positive definite matrix, if one exists.
pub fn cholesky_lower(g: &DMatrix<f64>) -> Option<Triangular> {
    Cholesky::new(g.clone())
        .map(|c| Triangular::from_matrix_unchecked(c.unpack(), Orientation::Lower))
}
