use nalgebra::{DMatrix, DVector};

use super::triangular::{Orientation, Triangular};
use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};

/// Plane rotation `[c s; -s c]` acting on coordinates `i` and `j`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GivensRotation {
    pub c: f64,
    pub s: f64,
    pub i: usize,
    pub j: usize,
}

impl GivensRotation {
    /// Rotation mapping `(a, b)` to `(hypot(a, b), 0)` on coordinates `(i, j)`.
    pub fn zeroing(a: f64, b: f64, i: usize, j: usize) -> (Self, f64) {
        let (c, s, r) = givens_coeffs(a, b);
        (Self { c, s, i, j }, r)
    }

    pub fn identity(i: usize, j: usize) -> Self {
        Self {
            c: 1.0,
            s: 0.0,
            i,
            j,
        }
    }

    /// Replaces rows `i`, `j` of `m` with `Γ [row_i; row_j]`.
    pub fn apply_rows(&self, m: &mut DMatrix<f64>) {
        for col in 0..m.ncols() {
            let a = m[(self.i, col)];
            let b = m[(self.j, col)];
            m[(self.i, col)] = self.c * a + self.s * b;
            m[(self.j, col)] = -self.s * a + self.c * b;
        }
    }

    /// Replaces columns `i`, `j` of `m` with `[col_i col_j] Γᵀ`.
    pub fn apply_columns(&self, m: &mut DMatrix<f64>) {
        for row in 0..m.nrows() {
            let a = m[(row, self.i)];
            let b = m[(row, self.j)];
            m[(row, self.i)] = self.c * a + self.s * b;
            m[(row, self.j)] = -self.s * a + self.c * b;
        }
    }

    /// Same transform on a vector's entries `i`, `j`.
    pub fn apply_vector(&self, v: &mut DVector<f64>) {
        let a = v[self.i];
        let b = v[self.j];
        v[self.i] = self.c * a + self.s * b;
        v[self.j] = -self.s * a + self.c * b;
    }
}

fn givens_coeffs(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        if a >= 0.0 {
            (1.0, 0.0, a)
        } else {
            (-1.0, 0.0, -a)
        }
    } else {
        let r = a.hypot(b);
        (a / r, b / r, r)
    }
}

/// Rotation with `Γ (a, b)ᵀ = (r, 0)ᵀ`, `r = hypot(a, b) ≥ 0`, on coordinates 0 and 1.
pub fn givens(a: f64, b: f64) -> GivensRotation {
    GivensRotation::zeroing(a, b, 0, 1).0
}

/// How the appended column of `[T v]` is treated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AppendMode {
    /// Border `T` to `[T v; 0 γ]` with `γ > 0`.
    Border { gamma: f64 },
    /// Rotate `[T v]` back to a square factor, dropping the annihilated column.
    Absorb,
}

/// Triangular factor after an appended column, with the rotations that produced it.
///
/// Rotations are listed in application order and act on column indices of the
/// bordered factor (size `dim + 1`). Replaying them through
/// [`GivensRotation::apply_columns`] on any matrix sharing the factor's column
/// space keeps that matrix consistent with the new factor.
#[derive(Clone, Debug, PartialEq)]
pub struct Retriangularized {
    pub factor: Triangular,
    pub rotations: Vec<GivensRotation>,
    /// True when the last column was dropped.
    pub dropped_last: bool,
}

/// Restores triangular form of `T` after appending the column `v`.
pub fn retriangularize_append(
    t: &Triangular,
    v: &DVector<f64>,
    mode: AppendMode,
) -> Result<Retriangularized> {
    let r = t.dim();
    ensure_len("appended column", r, v.len())?;
    ensure_finite_slice(v.as_slice(), "appended column")?;

    let mut bar = t.matrix().clone().resize(r + 1, r + 1, 0.0);
    for i in 0..r {
        bar[(i, r)] = v[i];
    }
    let mut rotations = Vec::new();

    match mode {
        AppendMode::Border { gamma } => {
            if !(gamma.is_finite() && gamma > 0.0) {
                return Err(DmdError::InvalidConfig(format!(
                    "border weight must be positive, got {gamma:e}"
                )));
            }
            bar[(r, r)] = gamma;
            if t.orientation() == Orientation::Lower {
                for i in 0..r {
                    rotate_into_pivot(&mut bar, i, r, &mut rotations);
                }
            }
            Ok(Retriangularized {
                factor: Triangular::from_matrix_unchecked(bar, t.orientation()),
                rotations,
                dropped_last: false,
            })
        }
        AppendMode::Absorb => {
            match t.orientation() {
                Orientation::Upper => {
                    for i in (0..r).rev() {
                        rotate_into_pivot(&mut bar, i, r, &mut rotations);
                    }
                }
                Orientation::Lower => {
                    for i in 0..r {
                        rotate_into_pivot(&mut bar, i, r, &mut rotations);
                    }
                }
            }
            let square = bar.view((0, 0), (r, r)).into_owned();
            Ok(Retriangularized {
                factor: Triangular::from_matrix_unchecked(square, t.orientation()),
                rotations,
                dropped_last: true,
            })
        }
    }
}

fn rotate_into_pivot(
    bar: &mut DMatrix<f64>,
    i: usize,
    last: usize,
    rotations: &mut Vec<GivensRotation>,
) {
    let (rot, rnorm) = GivensRotation::zeroing(bar[(i, i)], bar[(i, last)], i, last);
    rot.apply_columns(bar);
    bar[(i, i)] = rnorm;
    bar[(i, last)] = 0.0;
    rotations.push(rot);
}

/// Applies rotations, in order, to the columns of `m`.
pub fn apply_rotations_to_columns(m: &mut DMatrix<f64>, rotations: &[GivensRotation]) {
    for rot in rotations {
        rot.apply_columns(m);
    }
}

/// Applies rotations, in order, to the rows of `m`.
pub fn apply_rotations_to_rows(m: &mut DMatrix<f64>, rotations: &[GivensRotation]) {
    for rot in rotations {
        rot.apply_rows(m);
    }
}

/// Applies rotations, in order, to a vector.
pub fn apply_rotations_to_vector(v: &mut DVector<f64>, rotations: &[GivensRotation]) {
    for rot in rotations {
        rot.apply_vector(v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let g = givens(3.0, 4.0);
        assert_eq!((g.c, g.s), (0.6, 0.8));
        let mut v = DVector::from_vec(vec![3.0, 4.0]);
        g.apply_vector(&mut v);
        assert!((v[0] - 5.0).abs() < 1e-15 && v[1].abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let g = givens(0.0, 0.0);
        assert_eq!((g.c, g.s), (1.0, 0.0));
        let g = givens(0.0, 1.0);
        assert_eq!((g.c, g.s), (0.0, 1.0));
        let g = givens(-2.0, 0.0);
        assert_eq!((g.c, g.s), (-1.0, 0.0));
    }

    #[test]
    fn border_upper_needs_no_rotation() {
        let t = Triangular::from_matrix(
            DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]),
            Orientation::Upper,
        )
        .unwrap();
        let out = retriangularize_append(
            &t,
            &DVector::from_vec(vec![1.0, 1.0]),
            AppendMode::Border { gamma: 0.5 },
        )
        .unwrap();
        assert!(out.rotations.is_empty());
        assert_eq!(out.factor.matrix()[(2, 2)], 0.5);
        assert_eq!(out.factor.matrix()[(0, 2)], 1.0);
    }

    #[test]
    fn absorb_preserves_gram_upper_and_lower() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -1.0, 0.0, 1.5, 0.2, 0.0, 0.0, 0.7]);
        let v = DVector::from_vec(vec![0.4, -0.9, 1.1]);
        for orient in [Orientation::Upper, Orientation::Lower] {
            let src = if orient == Orientation::Upper {
                m.clone()
            } else {
                m.transpose()
            };
            let t = Triangular::from_matrix(src.clone(), orient).unwrap();
            let out = retriangularize_append(&t, &v, AppendMode::Absorb).unwrap();
            let want = &src * src.transpose() + &v * v.transpose();
            let f = out.factor.matrix();
            assert!((f * f.transpose() - want).norm() < 1e-13);
            let check = Triangular::from_matrix(f.clone(), orient).unwrap();
            assert_eq!(check.matrix(), f);
            assert!(f.diagonal().iter().all(|d| *d >= 0.0));
        }
    }
}
