#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use streamdmd::linalg::{trunc_svd, C64};
use streamdmd::{BasisTag, RitzSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `U diag(σ) Vᵀ` with log-spaced singular values from 1 down to `1/kappa`.
pub fn with_condition(rng: &mut ChaCha8Rng, rows: usize, cols: usize, kappa: f64) -> DMatrix<f64> {
    let k = rows.min(cols);
    let u = gaussian(rng, rows, k).qr().q();
    let v = gaussian(rng, cols, k).qr().q();
    let sigma = DVector::from_fn(k, |i, _| {
        if k == 1 {
            1.0
        } else {
            kappa.powf(-(i as f64) / (k - 1) as f64)
        }
    });
    u * DMatrix::from_diagonal(&sigma) * v.transpose()
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    trunc_svd(m, 0.5).unwrap().sigma.iter().copied().collect()
}

pub fn cond(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    s[0] / s[s.len() - 1]
}

/// `Y X⁺` through an SVD pseudoinverse with relative cutoff `tol`.
pub fn lstsq_operator(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let svd = trunc_svd(x, tol).unwrap();
    let k = svd.rank;
    let mut yv = y * svd.v.columns(0, k);
    for j in 0..k {
        yv.column_mut(j).scale_mut(1.0 / svd.sigma[j]);
    }
    yv * svd.u.columns(0, k).transpose()
}

pub fn cmat(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

/// Lifted exact DMD vectors of a Ritz set given the bases a state exposes.
pub fn lift_exact(ritz: &RitzSet, qx: &DMatrix<f64>, qy: &DMatrix<f64>) -> DMatrix<C64> {
    let basis = match ritz.exact_basis.expect("exact modes") {
        BasisTag::Qy | BasisTag::Q => qy,
        BasisTag::Qx => qx,
        BasisTag::Ambient | BasisTag::Uk => return ritz.exact_coeffs.clone().unwrap(),
    };
    ritz.lift_exact(basis).unwrap()
}

pub fn col(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}
