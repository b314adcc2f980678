use nalgebra::{DMatrix, QR};

use super::triangular::{Orientation, Triangular};
use crate::error::{DmdError, Result};

/// Thin Householder QR `A = Q R` with a nonnegative diagonal on `R`.
///
/// Requires `rows ≥ cols`.
pub fn qr_thin(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Triangular)> {
    let (m, n) = a.shape();
    if m < n {
        return Err(DmdError::DimensionMismatch {
            context: "thin QR (rows must be at least columns)",
            expected: n,
            found: m,
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("QR input"));
    }
    let qr = QR::new(a.clone());
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
            q.column_mut(i).neg_mut();
        }
    }
    Ok((q, Triangular::from_matrix(r, Orientation::Upper)?))
}

/// Factors a wide `S` (r×n, `n ≥ r`) as `S = T Q̃ᵀ` with `T` triangular in the
/// requested orientation and `Q̃` having orthonormal columns.
pub fn tq_factor(s: &DMatrix<f64>, orientation: Orientation) -> Result<(Triangular, DMatrix<f64>)> {
    let (r, n) = s.shape();
    match orientation {
        Orientation::Lower => {
            let (q, rr) = qr_thin(&s.transpose())?;
            Ok((rr.transpose(), q))
        }
        Orientation::Upper => {
            // QR of the row-reversed transpose, then undo the reversal on both sides
            let mut st_rev = DMatrix::zeros(n, r);
            for j in 0..r {
                st_rev.set_column(j, &s.row(r - 1 - j).transpose());
            }
            let (q, rr) = qr_thin(&st_rev)?;
            let lower = rr.transpose().into_matrix();
            let mut t = DMatrix::zeros(r, r);
            for i in 0..r {
                for j in 0..r {
                    t[(i, j)] = lower[(r - 1 - i, r - 1 - j)];
                }
            }
            let mut qt = DMatrix::zeros(n, r);
            for j in 0..r {
                qt.set_column(j, &q.column(r - 1 - j));
            }
            Ok((Triangular::from_matrix(t, Orientation::Upper)?, qt))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tq_both_orientations_reconstruct() {
        let s = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.5, -1.0, 0.3, -0.7, 2.0, 1.0]);
        for o in [Orientation::Upper, Orientation::Lower] {
            let (t, q) = tq_factor(&s, o).unwrap();
            assert_eq!(t.orientation(), o);
            assert!((t.matrix() * q.transpose() - &s).norm() < 1e-14);
            assert!((q.transpose() * &q - DMatrix::identity(2, 2)).norm() < 1e-14);
            assert!(t.diagonal().iter().all(|d| *d >= 0.0));
            let raw = t.matrix();
            match o {
                Orientation::Upper => assert_eq!(raw[(1, 0)], 0.0),
                Orientation::Lower => assert_eq!(raw[(0, 1)], 0.0),
            }
        }
    }
}
