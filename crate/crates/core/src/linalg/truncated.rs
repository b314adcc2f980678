use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{DmdError, Result};

/// Eigendecomposition of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
    /// Count of eigenvalues above `tol * largest`.
    pub rank: usize,
}

/// Singular value decomposition sorted by descending singular value.
#[derive(Clone, Debug)]
pub struct TruncSvd {
    pub u: DMatrix<f64>,
    pub sigma: DVector<f64>,
    pub v: DMatrix<f64>,
    /// Count of singular values above `tol * largest`.
    pub rank: usize,
}

fn numeric_rank(sorted_desc: &DVector<f64>, tol: f64) -> usize {
    match sorted_desc.iter().next() {
        Some(&top) if top > 0.0 => sorted_desc.iter().take_while(|v| **v > tol * top).count(),
        _ => 0,
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol < 1.0 {
        Ok(())
    } else {
        Err(DmdError::InvalidTolerance(format!(
            "truncation tolerance must lie in (0,1), got {tol:e}"
        )))
    }
}

/// Sorted eigendecomposition of the symmetric part of `g`.
pub fn trunc_sym_eig(g: &DMatrix<f64>, tol: f64) -> Result<SymEig> {
    check_tol(tol)?;
    if g.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("symmetric eigendecomposition input"));
    }
    let n = g.nrows();
    if n == 0 {
        return Ok(SymEig {
            vectors: DMatrix::zeros(0, 0),
            values: DVector::zeros(0),
            rank: 0,
        });
    }
    let sym = (g + g.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or(DmdError::NoConvergence("symmetric eigendecomposition"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i))
            .collect::<Vec<_>>(),
    );
    let rank = numeric_rank(&values, tol);
    Ok(SymEig {
        vectors,
        values,
        rank,
    })
}

/// Sorted thin SVD of `t`.
pub fn trunc_svd(t: &DMatrix<f64>, tol: f64) -> Result<TruncSvd> {
    check_tol(tol)?;
    if t.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("singular value decomposition input"));
    }
    let k = t.nrows().min(t.ncols());
    if k == 0 {
        return Ok(TruncSvd {
            u: DMatrix::zeros(t.nrows(), 0),
            sigma: DVector::zeros(0),
            v: DMatrix::zeros(t.ncols(), 0),
            rank: 0,
        });
    }
    let (u_raw, s_raw, v_raw) =
        jacobi_svd(t).ok_or(DmdError::NoConvergence("singular value decomposition"))?;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| s_raw[b].total_cmp(&s_raw[a]));
    let sigma = DVector::from_iterator(k, order.iter().map(|&i| s_raw[i]));
    let u = DMatrix::from_columns(&order.iter().map(|&i| u_raw.column(i)).collect::<Vec<_>>());
    let v = DMatrix::from_columns(&order.iter().map(|&i| v_raw.column(i)).collect::<Vec<_>>());
    let rank = numeric_rank(&sigma, tol);
    Ok(TruncSvd { u, sigma, v, rank })
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    jacobi_svd(m).map_or(f64::NAN, |(_, s, _)| {
        s.iter().fold(0.0_f64, |a, v| a.max(*v))
    })
}

/// Two-norm condition number from singular values; infinite when singular.
pub fn cond2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    if m.iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    match jacobi_svd(m) {
        Some((_, s, _)) => {
            let max = s.iter().fold(0.0_f64, |a, v| a.max(*v));
            let min = s.iter().fold(f64::INFINITY, |a, v| a.min(*v));
            if min == 0.0 {
                f64::INFINITY
            } else {
                max / min
            }
        }
        None => f64::NAN,
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U diag(σ) Vᵀ` (unsorted) by Householder QR followed by
/// one-sided Jacobi rotations on the triangular factor.
///
/// Jacobi keeps small singular values to high relative accuracy; the bidiagonal
/// solver in nalgebra loses accuracy on some ill-conditioned 2×2 and 3×3 blocks.
pub(crate) fn jacobi_svd(a: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let (m, n) = a.shape();
    if m < n {
        let (u, s, v) = jacobi_svd(&a.transpose())?;
        return Some((v, s, u));
    }
    if n == 0 {
        return Some((
            DMatrix::zeros(m, 0),
            DVector::zeros(0),
            DMatrix::zeros(0, 0),
        ));
    }
    let qr = a.clone().qr();
    let q = qr.q();
    let mut w = qr.r();
    let mut v = DMatrix::<f64>::identity(n, n);
    // a stricter threshold than √n·ε can cycle on roundoff without converging
    let threshold = (n as f64).sqrt() * f64::EPSILON;
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for r in (p + 1)..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(r).norm_squared();
                let gamma = w.column(p).dot(&w.column(r));
                if gamma == 0.0 || gamma.abs() <= threshold * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                rotate_pair(&mut w, p, r, c, s);
                rotate_pair(&mut v, p, r, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged || w.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let sigma = DVector::from_fn(n, |j, _| w.column(j).norm());
    let mut ur = DMatrix::zeros(n, n);
    for j in 0..n {
        if sigma[j] > 0.0 {
            ur.set_column(j, &(w.column(j) / sigma[j]));
        }
    }
    complete_orthonormal(&mut ur, &sigma);
    Some((q * ur, sigma, v))
}

fn rotate_pair(m: &mut DMatrix<f64>, p: usize, r: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (a, b) = (m[(i, p)], m[(i, r)]);
        m[(i, p)] = c * a - s * b;
        m[(i, r)] = s * a + c * b;
    }
}

/// Fills columns belonging to exactly zero singular values with an orthonormal complement.
fn complete_orthonormal(u: &mut DMatrix<f64>, sigma: &DVector<f64>) {
    let n = u.nrows();
    let mut candidate = 0;
    for j in (0..sigma.len()).filter(|&j| sigma[j] == 0.0) {
        while candidate < n {
            let mut e = DVector::zeros(n);
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for k in (0..u.ncols()).filter(|&k| k != j) {
                    let proj = u.column(k).dot(&e);
                    e.axpy(-proj, &u.column(k), 1.0);
                }
            }
            let norm = e.norm();
            if norm > 0.5 {
                u.set_column(j, &(e / norm));
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_eig_diagonal() {
        let g = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 1e-12]));
        let e = trunc_sym_eig(&g, 1e-10).unwrap();
        assert_eq!(e.values.as_slice(), &[4.0, 1.0, 1e-12]);
        assert_eq!(e.rank, 2);
        assert!((e.vectors[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn svd_sorted_and_reconstructs() {
        let t = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let s = trunc_svd(&t, 1e-12).unwrap();
        assert!(s.sigma[0] >= s.sigma[1]);
        let rec = &s.u * DMatrix::from_diagonal(&s.sigma) * s.v.transpose();
        assert!((rec - t).norm() < 1e-13);
        assert_eq!(s.rank, 2);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let s = trunc_svd(&DMatrix::zeros(2, 2), 1e-10).unwrap();
        assert_eq!(s.rank, 0);
    }

    #[test]
    fn cond2_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![10.0, 0.1]));
        assert!((cond2(&m) - 100.0).abs() < 1e-12);
    }

    #[test]
    fn ill_conditioned_two_by_two_reconstructs() {
        let (c, s) = (0.7f64.cos(), 0.7f64.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let a =
            &rot * DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-14])) * rot.transpose();
        let t = trunc_svd(&a, 1e-15).unwrap();
        let rec = &t.u * DMatrix::from_diagonal(&t.sigma) * t.v.transpose();
        assert!((rec - &a).norm() < 4.0 * f64::EPSILON);
        assert!(t.sigma[1] < 1e-13);
    }

    #[test]
    fn rank_deficient_factors_stay_orthonormal() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        let t = trunc_svd(&a, 1e-12).unwrap();
        assert_eq!(t.rank, 1);
        assert!((t.u.transpose() * &t.u - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert!((t.v.transpose() * &t.v - DMatrix::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn wide_input_transposes() {
        let t = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 0.0]);
        let s = trunc_svd(&t, 1e-12).unwrap();
        assert_eq!((s.u.shape(), s.v.shape()), ((2, 2), (3, 2)));
        assert!((&s.u * DMatrix::from_diagonal(&s.sigma) * s.v.transpose() - t).norm() < 1e-14);
    }

    #[test]
    fn bordered_factor_converges() {
        // a 9x10 bordered triangular factor on which an eps*sqrt(alpha*beta)
        // rotation threshold cycled without converging
        #[rustfmt::skip]
        let t = DMatrix::from_column_slice(9, 10, &[
            2.667501193233271e-3, 0e0, 0e0, 0e0, 0e0,
            0e0, 0e0, 0e0, 0e0, -7.95732675949526e-3,
            2.169040843479505e-2, 0e0, 0e0, 0e0, 0e0,
            0e0, 0e0, 0e0, 2.3899793689291927e-3, -1.7272760570049818e-2,
            3.178289560367248e-3, 0e0, 0e0, 0e0, 0e0,
            0e0, 0e0, 1.778443230047366e-2, -8.148737537067735e-2, 2.1444303210726743e-2,
            2.070375820450098e-2, 0e0, 0e0, 0e0, 0e0,
            0e0, -3.2570298673342563e-3, 5.458147439745091e-3, 9.780513212426295e-4, -8.536818448572226e-3,
            1.7878000913365867e-2, 0e0, 0e0, 0e0, 0e0,
            -1.7259927308719926e-2, 1.0504336913332654e-1, -7.532702260231769e-3, -6.133241333206104e-3, -2.7945666161025486e-2,
            7.210305515192718e-2, 0e0, 0e0, 0e0, -4.993353752238373e-2,
            1.6631117800955584e-2, -2.7718163601713603e-2, -1.5921352297823932e-1, 6.39900218265623e-2, 3.222450131272174e-2,
            8.859527837313189e-2, 0e0, 0e0, 8.570763297507107e-2, 1.435270265844853e-1,
            -7.780072430011831e-3, 2.4529095006080778e-1, -1.4926231488600183e-1, -1.409109381789285e-2, -2.2742051993395274e-1,
            1.821842772002534e-1, 0e0, 1.711687048499098e-1, -4.57029333629641e-1, -2.60922764161303e-2,
            -5.885662497466732e-1, -2.152091174236426e-1, 3.9383853156448034e-1, 5.6509818971159226e-2, 5.544425133773125e-2,
            3.992003433603078e-1, -1.3072431314014294e0, 1.9070695342615442e0, -1.0251909946001676e0, 4.284176241859576e-1,
            -5.984814692648213e-1, -5.601069158767628e-1, 6.929628158844252e-1, 2.0867368771762123e0, -8.056119422222198e-1,
        ]);
        let s = trunc_svd(&t, 1e-12).unwrap();
        let rebuilt = &s.u * DMatrix::from_diagonal(&s.sigma) * s.v.transpose();
        assert!((rebuilt - &t).norm() <= 1e-14 * t.norm());
    }
}
