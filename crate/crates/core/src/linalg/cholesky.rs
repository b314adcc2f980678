use nalgebra::{DMatrix, DVector};

use super::givens::GivensRotation;
use super::triangular::{Orientation, Triangular};
use crate::error::{ensure_finite_slice, ensure_len, DmdError, Result};

/// Upper factor of `RᵀR + x xᵀ`, obtained by rotating the row `xᵀ` into `R`.
///
/// Pivot rotations act on the pairs (row `i`, appended row) for `i = 0..m`.
pub fn cholesky_append_row(r: &Triangular, x: &DVector<f64>) -> Result<Triangular> {
    if r.orientation() != Orientation::Upper {
        return Err(DmdError::InvalidConfig(
            "row append expects an upper factor".into(),
        ));
    }
    let m = r.dim();
    ensure_len("appended row", m, x.len())?;
    ensure_finite_slice(x.as_slice(), "appended row")?;

    let mut stacked = r.matrix().clone().resize_vertically(m + 1, 0.0);
    for j in 0..m {
        stacked[(m, j)] = x[j];
    }
    for i in 0..m {
        let (rot, rnorm) = GivensRotation::zeroing(stacked[(i, i)], stacked[(m, i)], i, m);
        for j in (i + 1)..m {
            let a = stacked[(i, j)];
            let b = stacked[(m, j)];
            stacked[(i, j)] = rot.c * a + rot.s * b;
            stacked[(m, j)] = -rot.s * a + rot.c * b;
        }
        stacked[(i, i)] = rnorm;
        stacked[(m, i)] = 0.0;
    }
    Ok(Triangular::from_matrix_unchecked(
        stacked.view((0, 0), (m, m)).into_owned(),
        Orientation::Upper,
    ))
}

/// Borders a lower Cholesky factor `L` of `G + g gᵀ` to the factor of
/// `[G + g gᵀ, γ g; γ gᵀ, γ²]`.
pub fn gram_chol_augment(l: &Triangular, g: &DVector<f64>, gamma: f64) -> Result<Triangular> {
    if l.orientation() != Orientation::Lower {
        return Err(DmdError::InvalidConfig(
            "gram augmentation expects a lower factor".into(),
        ));
    }
    let n = l.dim();
    ensure_len("gram augmentation column", n, g.len())?;
    ensure_finite_slice(g.as_slice(), "gram augmentation column")?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(DmdError::InvalidConfig(format!(
            "augmentation weight must be positive, got {gamma:e}"
        )));
    }
    let b = l.solve(g)? * gamma;
    let beta_sq = gamma * gamma - b.norm_squared();
    if !(beta_sq > 0.0) {
        return Err(DmdError::LossOfDefiniteness(format!(
            "bordered pivot squared is {beta_sq:e}"
        )));
    }
    let mut out = l.matrix().clone().resize(n + 1, n + 1, 0.0);
    for j in 0..n {
        out[(n, j)] = b[j];
    }
    out[(n, n)] = beta_sq.sqrt();
    Ok(Triangular::from_matrix_unchecked(out, Orientation::Lower))
}

/// Solves `G z = b` with `G = RᵀR` for an upper factor or `G = L Lᵀ` for a lower one.
pub fn spd_solve(r: &Triangular, b: &DVector<f64>) -> Result<DVector<f64>> {
    match r.orientation() {
        Orientation::Upper => r.solve(&r.solve_transpose(b)?),
        Orientation::Lower => r.solve_transpose(&r.solve(b)?),
    }
}

/// Returns `B G⁻¹` with `G` given by its factor as in [`spd_solve`].
pub fn spd_right_divide(r: &Triangular, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    match r.orientation() {
        // B (RᵀR)⁻¹ = (B R⁻¹) R⁻ᵀ
        Orientation::Upper => r.right_divide_transpose(&r.right_divide(b)?),
        // B (L Lᵀ)⁻¹ = (B L⁻ᵀ) L⁻¹
        Orientation::Lower => r.right_divide(&r.right_divide_transpose(b)?),
    }
}
