//! Synthetic linear streams with known spectra.

use nalgebra::{DMatrix, DVector, QR};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{GenError, Result, SnapshotStream};

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal `rows × cols` matrix from the QR factor of a Gaussian matrix.
pub fn random_orthonormal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let q = QR::new(gaussian_matrix(rng, rows, cols)).q();
    q.columns(0, cols).into_owned()
}

/// `x_{i+1} = A x_i + noise·η_i` with seeded standard normal `η_i`; `n` columns starting at `x0`.
pub fn synth_linear_stream(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    n: usize,
    noise: f64,
    seed: u64,
) -> Result<SnapshotStream> {
    let m = a.nrows();
    if a.ncols() != m || x0.len() != m {
        return Err(GenError::InvalidParam(format!(
            "operator is {}x{} but the initial state has length {}",
            a.nrows(),
            a.ncols(),
            x0.len()
        )));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(GenError::InvalidParam(format!(
            "noise level must be nonnegative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = DMatrix::zeros(m, n);
    let mut x = x0.clone();
    for j in 0..n {
        data.set_column(j, &x);
        x = a * &x;
        if noise > 0.0 {
            x += gaussian_vector(&mut rng, m) * noise;
        }
    }
    Ok(SnapshotStream {
        data,
        blew_up: false,
    })
}

/// Block diagonal matrix of 2×2 scaled rotations `ρ_j R(θ_j)`, with a trailing
/// 1×1 block `ρ` when the size is odd.
pub fn rotation_blocks(moduli: &[f64], angles: &[f64], size: usize) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(size, size);
    let mut k = 0;
    let mut j = 0;
    while k + 1 < size {
        let (rho, th) = (moduli[j % moduli.len()], angles[j % angles.len()]);
        b[(k, k)] = rho * th.cos();
        b[(k, k + 1)] = -rho * th.sin();
        b[(k + 1, k)] = rho * th.sin();
        b[(k + 1, k + 1)] = rho * th.cos();
        k += 2;
        j += 1;
    }
    if k < size {
        b[(k, k)] = moduli[j % moduli.len()];
    }
    b
}

/// A random operator `A = V B V⁻¹` with known eigenvalues.
#[derive(Clone, Debug)]
pub struct SynthOperator {
    pub a: DMatrix<f64>,
    /// Eigenvalues as `(re, im)` pairs.
    pub eigenvalues: Vec<(f64, f64)>,
}

/// Operator with seeded rotation-block spectrum: moduli drawn from `[lo, hi]`,
/// angles from `(0.05, π − 0.05)`, conjugated by a well-conditioned random matrix.
pub fn synth_operator(m: usize, lo: f64, hi: f64, seed: u64) -> Result<SynthOperator> {
    if m == 0 || !(0.0 < lo && lo <= hi) {
        return Err(GenError::InvalidParam(format!(
            "need m > 0 and 0 < lo <= hi, got m={m}, [{lo}, {hi}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = m.div_ceil(2);
    let moduli: Vec<f64> = (0..blocks).map(|_| rng.random_range(lo..=hi)).collect();
    let angles: Vec<f64> = (0..blocks)
        .map(|_| rng.random_range(0.05..(std::f64::consts::PI - 0.05)))
        .collect();
    let b = rotation_blocks(&moduli, &angles, m);
    // V = Q (I + 0.3 G) keeps the eigenvector basis well conditioned
    let q = random_orthonormal(&mut rng, m, m);
    let v = &q
        * (DMatrix::identity(m, m) + gaussian_matrix(&mut rng, m, m) * (0.3 / (m as f64).sqrt()));
    let v_inv = v
        .clone()
        .try_inverse()
        .ok_or_else(|| GenError::InvalidParam("random eigenvector basis was singular".into()))?;
    let a = &v * b * v_inv;
    let mut eigenvalues = Vec::with_capacity(m);
    for j in 0..m / 2 {
        let (rho, th) = (moduli[j], angles[j]);
        eigenvalues.push((rho * th.cos(), rho * th.sin()));
        eigenvalues.push((rho * th.cos(), -rho * th.sin()));
    }
    if m % 2 == 1 {
        eigenvalues.push((moduli[m / 2], 0.0));
    }
    Ok(SynthOperator { a, eigenvalues })
}

/// Snapshots confined to a seeded `r`-dimensional subspace of `R^m`, evolving
/// by a fixed linear map inside it.
pub fn synth_lowrank_stream(m: usize, r: usize, n: usize, seed: u64) -> Result<SnapshotStream> {
    if r == 0 || r >= m {
        return Err(GenError::InvalidParam(format!(
            "need 0 < r < m, got r={r}, m={m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = random_orthonormal(&mut rng, m, r);
    let blocks = r.div_ceil(2);
    let moduli: Vec<f64> = (0..blocks).map(|_| rng.random_range(0.97..=1.0)).collect();
    let angles: Vec<f64> = (0..blocks).map(|_| rng.random_range(0.1..1.2)).collect();
    let b = rotation_blocks(&moduli, &angles, r);
    let mut z = gaussian_vector(&mut rng, r);
    let mut data = DMatrix::zeros(m, n);
    for j in 0..n {
        data.set_column(j, &(&u * &z));
        z = &b * z;
    }
    Ok(SnapshotStream {
        data,
        blew_up: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_operator_gives_constant_stream() {
        let x0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let s = synth_linear_stream(&DMatrix::identity(3, 3), &x0, 5, 0.0, 1).unwrap();
        for c in s.data.column_iter() {
            assert_eq!(c, x0);
        }
    }

    #[test]
    fn rank_one_stream_is_collinear() {
        let s = synth_lowrank_stream(6, 1, 8, 3).unwrap();
        let first = s.data.column(0).normalize();
        for c in s.data.column_iter() {
            let c = c.normalize();
            assert!((c.dot(&first).abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeded_streams_repeat() {
        let a = synth_lowrank_stream(10, 4, 12, 99).unwrap();
        let b = synth_lowrank_stream(10, 4, 12, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn operator_spectrum_matches() {
        let op = synth_operator(5, 0.5, 1.0, 11).unwrap();
        let trace: f64 = op.eigenvalues.iter().map(|e| e.0).sum();
        assert!((op.a.trace() - trace).abs() < 1e-10);
        let det: f64 = op.eigenvalues.iter().map(|e| e.0.hypot(e.1)).product();
        assert!((op.a.determinant() - det).abs() < 1e-10);
    }
}
