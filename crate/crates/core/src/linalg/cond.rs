use nalgebra::DVector;

use super::triangular::Triangular;

fn one_norm(t: &Triangular) -> f64 {
    t.matrix()
        .column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Estimate of `‖T⁻¹‖₁` by Hager's iteration with Higham's extra test vector.
fn inverse_one_norm_estimate(t: &Triangular, max_iter: usize) -> Option<f64> {
    let n = t.dim();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0_f64;
    let mut last_j = usize::MAX;
    for _ in 0..max_iter {
        let y = t.solve(&x).ok()?;
        est = est.max(y.iter().map(|v| v.abs()).sum());
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let z = t.solve_transpose(&xi).ok()?;
        let (j, zmax) = z.iter().enumerate().fold((0, 0.0_f64), |(bj, bv), (j, v)| {
            if v.abs() > bv {
                (j, v.abs())
            } else {
                (bj, bv)
            }
        });
        if zmax <= z.dot(&x) || j == last_j {
            break;
        }
        last_j = j;
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    let alt = DVector::from_iterator(
        n,
        (0..n).map(|i| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
        }),
    );
    let w = t.solve(&alt).ok()?;
    let alt_est = 2.0 * w.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    Some(est.max(alt_est))
}

/// Cheap condition estimate of a triangular factor in the 1-norm.
///
/// Returns infinity for an exactly singular factor and NaN for non-finite input.
pub fn cond_estimate_tri(t: &Triangular) -> f64 {
    if t.dim() == 0 {
        return 1.0;
    }
    if t.matrix().iter().any(|v| !v.is_finite()) {
        return f64::NAN;
    }
    if t.diagonal().iter().any(|d| *d == 0.0) {
        return f64::INFINITY;
    }
    match inverse_one_norm_estimate(t, 5) {
        Some(inv) => one_norm(t) * inv,
        None => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Orientation;
    use nalgebra::DMatrix;

    #[test]
    fn diagonal_is_exact() {
        let t = Triangular::from_diagonal(&[1.0, 1e-3, 10.0], Orientation::Upper);
        assert!((cond_estimate_tri(&t) - 1e4).abs() < 1e-8);
    }

    #[test]
    fn singular_is_infinite() {
        let t = Triangular::from_diagonal(&[1.0, 0.0], Orientation::Lower);
        assert!(cond_estimate_tri(&t).is_infinite());
    }

    #[test]
    fn bidiagonal_within_factor() {
        let mut m = DMatrix::identity(6, 6);
        for i in 0..5 {
            m[(i, i + 1)] = -2.0;
        }
        let t = Triangular::from_matrix(m.clone(), Orientation::Upper).unwrap();
        let k2 = crate::linalg::cond2(&m);
        let est = cond_estimate_tri(&t);
        assert!(est >= k2 / 10.0 && est <= k2 * 10.0, "est {est} vs {k2}");
    }
}
