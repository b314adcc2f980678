use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, DmdError, Result};

/// Which triangle of a [`Triangular`] factor carries the nonzeros.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Orientation {
    #[default]
    Upper,
    Lower,
}

impl Orientation {
    pub fn flip(self) -> Self {
        match self {
            Orientation::Upper => Orientation::Lower,
            Orientation::Lower => Orientation::Upper,
        }
    }
}

impl std::str::FromStr for Orientation {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "u" | "upper" => Ok(Orientation::Upper),
            "l" | "lower" => Ok(Orientation::Lower),
            other => Err(DmdError::InvalidConfig(format!(
                "unknown orientation '{other}'"
            ))),
        }
    }
}

/// Square triangular matrix tagged with its orientation.
///
/// Entries outside the triangle are kept at exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangular {
    mat: DMatrix<f64>,
    orientation: Orientation,
}

impl Triangular {
    /// Wraps `mat`, zeroing anything outside the requested triangle.
    pub fn from_matrix(mut mat: DMatrix<f64>, orientation: Orientation) -> Result<Self> {
        ensure_len("triangular factor (square)", mat.nrows(), mat.ncols())?;
        let n = mat.nrows();
        for j in 0..n {
            for i in 0..n {
                let outside = match orientation {
                    Orientation::Upper => i > j,
                    Orientation::Lower => i < j,
                };
                if outside {
                    mat[(i, j)] = 0.0;
                }
            }
        }
        Ok(Self { mat, orientation })
    }

    pub(crate) fn from_matrix_unchecked(mat: DMatrix<f64>, orientation: Orientation) -> Self {
        Self { mat, orientation }
    }

    pub fn from_diagonal(diag: &[f64], orientation: Orientation) -> Self {
        let mat = DMatrix::from_diagonal(&DVector::from_column_slice(diag));
        Self { mat, orientation }
    }

    pub fn empty(orientation: Orientation) -> Self {
        Self {
            mat: DMatrix::zeros(0, 0),
            orientation,
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.mat
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.mat
    }

    pub fn transpose(&self) -> Triangular {
        Triangular {
            mat: self.mat.transpose(),
            orientation: self.orientation.flip(),
        }
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.mat.diagonal()
    }

    fn check_nonsingular(&self) -> Result<()> {
        if self.mat.iter().any(|v| !v.is_finite()) {
            return Err(DmdError::NonFinite("triangular factor"));
        }
        if self.mat.diagonal().iter().any(|d| *d == 0.0) {
            return Err(DmdError::Singular {
                cond: f64::INFINITY,
            });
        }
        Ok(())
    }

    /// Solves `T z = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("triangular solve", self.dim(), b.len())?;
        self.check_nonsingular()?;
        let out = match self.orientation {
            Orientation::Upper => self.mat.solve_upper_triangular(b),
            Orientation::Lower => self.mat.solve_lower_triangular(b),
        };
        out.ok_or(DmdError::Singular {
            cond: f64::INFINITY,
        })
    }

    /// Solves `Tᵀ z = b`.
    pub fn solve_transpose(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("triangular transpose solve", self.dim(), b.len())?;
        self.check_nonsingular()?;
        let out = match self.orientation {
            Orientation::Upper => self.mat.tr_solve_upper_triangular(b),
            Orientation::Lower => self.mat.tr_solve_lower_triangular(b),
        };
        out.ok_or(DmdError::Singular {
            cond: f64::INFINITY,
        })
    }

    /// Solves `T Z = B` column by column.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("triangular solve", self.dim(), b.nrows())?;
        self.check_nonsingular()?;
        let out = match self.orientation {
            Orientation::Upper => self.mat.solve_upper_triangular(b),
            Orientation::Lower => self.mat.solve_lower_triangular(b),
        };
        out.ok_or(DmdError::Singular {
            cond: f64::INFINITY,
        })
    }

    /// Returns `B T⁻¹`.
    pub fn right_divide(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("right division by triangular factor", self.dim(), b.ncols())?;
        self.check_nonsingular()?;
        let bt = b.transpose();
        let out = match self.orientation {
            Orientation::Upper => self.mat.tr_solve_upper_triangular(&bt),
            Orientation::Lower => self.mat.tr_solve_lower_triangular(&bt),
        };
        out.map(|z| z.transpose()).ok_or(DmdError::Singular {
            cond: f64::INFINITY,
        })
    }

    /// Returns `B T⁻ᵀ`.
    pub fn right_divide_transpose(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_len("right division by triangular factor", self.dim(), b.ncols())?;
        self.check_nonsingular()?;
        let bt = b.transpose();
        let out = match self.orientation {
            Orientation::Upper => self.mat.solve_upper_triangular(&bt),
            Orientation::Lower => self.mat.solve_lower_triangular(&bt),
        };
        out.map(|z| z.transpose()).ok_or(DmdError::Singular {
            cond: f64::INFINITY,
        })
    }

    /// Solves `T z = b` for complex `b`.
    pub fn solve_complex(&self, b: &DVector<Complex<f64>>) -> Result<DVector<Complex<f64>>> {
        let re = self.solve(&b.map(|z| z.re))?;
        let im = self.solve(&b.map(|z| z.im))?;
        Ok(re.zip_map(&im, Complex::new))
    }

    /// Largest over smallest absolute diagonal entry.
    pub fn diagonal_ratio(&self) -> f64 {
        let d = self.mat.diagonal();
        let max = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let min = d.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
        if d.is_empty() {
            1.0
        } else {
            max / min
        }
    }
}
