//! Koopman mode decomposition: amplitudes by weighted least squares over a
//! window of snapshots, and k-step forecasts from the fitted expansion.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DmdError, Result};
use crate::linalg::{trunc_svd, C64};
use crate::ritz::{conjugate_groups, BasisTag, RitzSet};

/// Which Ritz pairs enter a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModeSelection {
    All,
    /// The `ℓ` smallest residuals, closed under conjugation.
    TopL(usize),
    /// Every pair with residual at most the bound, closed under conjugation.
    ResidualBelow(f64),
}

/// Per-snapshot weights of the fit, oldest first.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Weights {
    #[default]
    Uniform,
    /// `w_i = β^(p−i)`, favouring recent snapshots when `β < 1`.
    Exponential(f64),
}

impl Weights {
    pub fn values(&self, p: usize) -> Vec<f64> {
        match *self {
            Weights::Uniform => vec![1.0; p],
            Weights::Exponential(beta) => (1..=p).map(|i| beta.powi((p - i) as i32)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Weights::Exponential(b) if !(b.is_finite() && b > 0.0) => Err(DmdError::InvalidConfig(
                format!("forgetting factor must be positive, got {b}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Indices of the selected Ritz pairs, sorted ascending.
pub fn select_modes(ritz: &RitzSet, policy: ModeSelection) -> Vec<usize> {
    let n = ritz.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        ritz.residuals[a].total_cmp(&ritz.residuals[b]).then(
            ritz.eigenvalues[b]
                .norm()
                .total_cmp(&ritz.eigenvalues[a].norm()),
        )
    });
    let picked: Vec<usize> = match policy {
        ModeSelection::All => order,
        ModeSelection::TopL(l) => {
            if l > n {
                warn!("requested {l} modes but only {n} are available");
            }
            order.into_iter().take(l).collect()
        }
        ModeSelection::ResidualBelow(tau) => order
            .into_iter()
            .filter(|&i| ritz.residuals[i] <= tau)
            .collect(),
    };
    let groups = conjugate_groups(&ritz.eigenvalues);
    let mut keep = vec![false; n];
    for i in picked {
        keep[i] = true;
        if let Some(g) = groups.iter().find(|g| g.contains(&i)) {
            for &j in g {
                keep[j] = true;
            }
        }
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Fitted expansion `s_i ≈ Σ_j z_j α_j λ_j^(i−1)` over a window of `p` snapshots.
#[derive(Clone, Debug)]
pub struct KmdResult {
    pub mode_indices: Vec<usize>,
    pub amplitudes: Vec<C64>,
    pub eigenvalues: Vec<C64>,
    /// Mode coefficient columns, in the same basis as the fitted snapshots.
    pub modes: DMatrix<C64>,
    pub basis: BasisTag,
    pub weights: Vec<f64>,
    /// Weighted least-squares residual norm.
    pub residual: f64,
    pub rank_deficient: bool,
}

/// A forecast with the imaginary part discarded when taking the real part.
#[derive(Clone, Debug)]
pub struct Forecast {
    pub values: DVector<f64>,
    pub imag_residue: f64,
}

impl KmdResult {
    pub fn window(&self) -> usize {
        self.weights.len()
    }

    /// Complex prediction of snapshot `p − 1 + k` in the fitted basis (`k = 0` reconstructs the last).
    pub fn predict_complex(&self, k: usize) -> DVector<C64> {
        let exp = (self.window() - 1 + k) as u32;
        let mut out = DVector::zeros(self.modes.nrows());
        for (j, (lam, a)) in self.eigenvalues.iter().zip(&self.amplitudes).enumerate() {
            out.axpy(
                *a * lam.powu(exp),
                &self.modes.column(j),
                C64::new(1.0, 0.0),
            );
        }
        out
    }

    /// Real k-step forecast in the fitted basis.
    pub fn forecast(&self, k: usize) -> Forecast {
        real_part(self.predict_complex(k))
    }

    /// Real k-step forecast lifted through a real basis.
    pub fn forecast_lifted(&self, k: usize, basis: &DMatrix<f64>) -> Forecast {
        let c = self.predict_complex(k);
        real_part(crate::ritz::lift_vector(basis, &c))
    }
}

fn real_part(c: DVector<C64>) -> Forecast {
    let values = c.map(|z| z.re);
    let im = c.map(|z| z.im).norm();
    let scale = values.norm();
    let imag_residue = if scale > 0.0 { im / scale } else { im };
    if imag_residue > 1e-10 {
        warn!("forecast has relative imaginary residue {imag_residue:e}");
    }
    Forecast {
        values,
        imag_residue,
    }
}

/// Householder reflector for `x`, returning `(v, β)` with `(I − 2vvᴴ)x = β e₁` and `‖v‖ = 1`.
fn reflector(x: &[C64]) -> Option<(Vec<C64>, C64)> {
    let norm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    let phase = if x[0].norm() > 0.0 {
        x[0] / x[0].norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let beta = -phase * norm;
    let mut v: Vec<C64> = x.to_vec();
    v[0] -= beta;
    let vn = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if vn == 0.0 {
        return None;
    }
    for z in &mut v {
        *z /= vn;
    }
    Some((v, beta))
}

/// Incremental QR of a tall complex system fed block by block.
struct BlockQr {
    r: DMatrix<C64>,
    c: DVector<C64>,
    resid_sq: f64,
}

impl BlockQr {
    fn new(l: usize) -> Self {
        Self {
            r: DMatrix::zeros(l, l),
            c: DVector::zeros(l),
            resid_sq: 0.0,
        }
    }

    /// Folds the rows `[B | b]` into the triangular factor.
    fn absorb(&mut self, block: DMatrix<C64>, rhs: DVector<C64>) {
        let l = self.r.ncols();
        let rows = l + block.nrows();
        let mut m = DMatrix::zeros(rows, l);
        m.view_mut((0, 0), (l, l)).copy_from(&self.r);
        m.view_mut((l, 0), (block.nrows(), l)).copy_from(&block);
        let mut b = DVector::zeros(rows);
        b.rows_mut(0, l).copy_from(&self.c);
        b.rows_mut(l, rhs.len()).copy_from(&rhs);

        for k in 0..l {
            // only rows k and l.. are nonzero below the diagonal
            let idx: Vec<usize> = std::iter::once(k).chain(l..rows).collect();
            let x: Vec<C64> = idx.iter().map(|&i| m[(i, k)]).collect();
            let Some((v, beta)) = reflector(&x) else {
                continue;
            };
            for j in k..l {
                let dot: C64 = idx
                    .iter()
                    .zip(&v)
                    .map(|(&i, vi)| vi.conj() * m[(i, j)])
                    .sum();
                for (&i, vi) in idx.iter().zip(&v) {
                    m[(i, j)] -= *vi * dot * 2.0;
                }
            }
            let dot: C64 = idx.iter().zip(&v).map(|(&i, vi)| vi.conj() * b[i]).sum();
            for (&i, vi) in idx.iter().zip(&v) {
                b[i] -= *vi * dot * 2.0;
            }
            m[(k, k)] = beta;
            for &i in &idx[1..] {
                m[(i, k)] = C64::new(0.0, 0.0);
            }
        }
        self.r = m.view((0, 0), (l, l)).into_owned();
        self.c = b.rows(0, l).into_owned();
        self.resid_sq += b.rows(l, rows - l).norm_squared();
    }

    /// Solves `R α = c`; falls back to a minimum-norm solve when `R` is numerically singular.
    fn solve(&self) -> (DVector<C64>, f64, bool) {
        let l = self.r.ncols();
        let diag_max = (0..l).map(|i| self.r[(i, i)].norm()).fold(0.0, f64::max);
        let cut = diag_max * 1e-13;
        let singular = diag_max == 0.0 || (0..l).any(|i| self.r[(i, i)].norm() <= cut);
        if !singular {
            let mut a = DVector::zeros(l);
            for i in (0..l).rev() {
                let s: C64 = ((i + 1)..l).map(|j| self.r[(i, j)] * a[j]).sum();
                a[i] = (self.c[i] - s) / self.r[(i, i)];
            }
            return (a, self.resid_sq.sqrt(), false);
        }
        warn!("mode fit is rank deficient; using the minimum-norm solution");
        // min-norm solve on the real embedding [[Re R, -Im R], [Im R, Re R]], which is an isometry of C^l
        let mut emb = DMatrix::zeros(2 * l, 2 * l);
        for i in 0..l {
            for j in 0..l {
                let z = self.r[(i, j)];
                emb[(i, j)] = z.re;
                emb[(i, j + l)] = -z.im;
                emb[(i + l, j)] = z.im;
                emb[(i + l, j + l)] = z.re;
            }
        }
        let rhs = DVector::from_fn(2 * l, |i, _| {
            if i < l {
                self.c[i].re
            } else {
                self.c[i - l].im
            }
        });
        let mut x = DVector::zeros(2 * l);
        if let Ok(svd) = trunc_svd(&emb, 1e-13) {
            for k in 0..svd.rank {
                x.axpy(
                    svd.u.column(k).dot(&rhs) / svd.sigma[k],
                    &svd.v.column(k),
                    1.0,
                );
            }
        }
        let a = DVector::from_fn(l, |i, _| C64::new(x[i], x[i + l]));
        let extra = (&self.c - &self.r * &a).norm_squared();
        (a, (self.resid_sq + extra).sqrt(), true)
    }
}

/// Weighted least-squares amplitudes for modes (columns of `modes`) over the
/// snapshot window (columns of `snapshots`, oldest first).
pub fn kmd_fit(
    snapshots: &DMatrix<f64>,
    modes: &DMatrix<C64>,
    eigenvalues: &[C64],
    weights: &[f64],
) -> Result<KmdResult> {
    let (r, p) = snapshots.shape();
    let l = modes.ncols();
    if p == 0 {
        return Err(DmdError::InvalidConfig(
            "mode fit needs at least one snapshot".into(),
        ));
    }
    ensure_len("mode rows", r, modes.nrows())?;
    ensure_len("eigenvalue count", l, eigenvalues.len())?;
    ensure_len("weight count", p, weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(DmdError::InvalidConfig(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if snapshots.iter().any(|v| !v.is_finite())
        || modes
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(DmdError::NonFinite("mode fit input"));
    }

    let mut qr = BlockQr::new(l);
    let mut powers: Vec<C64> = vec![C64::new(1.0, 0.0); l];
    for (i, w) in weights.iter().enumerate() {
        let mut block = modes.clone();
        for (j, mut col) in block.column_iter_mut().enumerate() {
            col *= powers[j] * *w;
        }
        let rhs = snapshots.column(i).map(|v| C64::new(v * w, 0.0));
        qr.absorb(block, rhs);
        for (pw, lam) in powers.iter_mut().zip(eigenvalues) {
            *pw *= lam;
        }
    }
    let (alpha, residual, rank_deficient) = qr.solve();
    Ok(KmdResult {
        mode_indices: (0..l).collect(),
        amplitudes: alpha.iter().copied().collect(),
        eigenvalues: eigenvalues.to_vec(),
        modes: modes.clone(),
        basis: BasisTag::Ambient,
        weights: weights.to_vec(),
        residual,
        rank_deficient,
    })
}

/// Fits the selected Ritz pairs of `ritz` to a coefficient window.
///
/// With `exact` the exact coefficients are used as modes, otherwise the Ritz
/// coefficients; the window must be expressed in the matching basis.
pub fn kmd_fit_ritz(
    ritz: &RitzSet,
    exact: bool,
    snapshots: &DMatrix<f64>,
    selection: ModeSelection,
    weights: Weights,
) -> Result<KmdResult> {
    weights.validate()?;
    let idx = select_modes(ritz, selection);
    let (source, basis) = if exact {
        match (&ritz.exact_coeffs, ritz.exact_basis) {
            (Some(e), Some(b)) => (e, b),
            _ => {
                return Err(DmdError::InvalidConfig(
                    "Ritz set carries no exact modes".into(),
                ))
            }
        }
    } else {
        (&ritz.coeffs, ritz.basis)
    };
    let rows = snapshots.nrows();
    let mut modes = DMatrix::zeros(rows, idx.len());
    for (k, &i) in idx.iter().enumerate() {
        let col = source.column(i);
        if col.len() > rows {
            return Err(DmdError::DimensionMismatch {
                context: "mode coefficients versus snapshot window",
                expected: rows,
                found: col.len(),
            });
        }
        modes.view_mut((0, k), (col.len(), 1)).copy_from(&col);
    }
    let lams: Vec<C64> = idx.iter().map(|&i| ritz.eigenvalues[i]).collect();
    let mut out = kmd_fit(snapshots, &modes, &lams, &weights.values(snapshots.ncols()))?;
    out.mode_indices = idx;
    out.basis = basis;
    Ok(out)
}

/// Square root of the Gram matrix `[[I, Qxy], [Qxyᵀ, I]]` of the concatenated basis `[Qx Qy]`.
pub fn concatenated_metric_sqrt(qxy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rx, ry) = qxy.shape();
    let mut g = DMatrix::identity(rx + ry, rx + ry);
    g.view_mut((0, rx), (rx, ry)).copy_from(qxy);
    g.view_mut((rx, 0), (ry, rx)).copy_from(&qxy.transpose());
    if g.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("cross-basis products"));
    }
    let eig = SymmetricEigen::new(g);
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sq) * eig.eigenvectors.transpose())
}

/// Fit where snapshots and modes are given in the concatenated coordinates of
/// two bases `[Qx Qy]` (stacked X part over Y part), using only `Qxy = QxᵀQy`.
pub fn kmd_fit_concatenated(
    qxy: &DMatrix<f64>,
    snapshots: &DMatrix<f64>,
    modes: &DMatrix<C64>,
    eigenvalues: &[C64],
    weights: &[f64],
) -> Result<KmdResult> {
    let (rx, ry) = qxy.shape();
    ensure_len("concatenated snapshot rows", rx + ry, snapshots.nrows())?;
    ensure_len("concatenated mode rows", rx + ry, modes.nrows())?;
    let s = concatenated_metric_sqrt(qxy)?;
    let sc = s.map(|v| Complex::new(v, 0.0));
    let mut out = kmd_fit(&(&s * snapshots), &(&sc * modes), eigenvalues, weights)?;
    out.modes = modes.clone();
    Ok(out)
}
