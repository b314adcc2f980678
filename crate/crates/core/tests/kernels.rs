//! Multiply-back and singular-value oracles for the hand-written update kernels.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use streamdmd::linalg::{
    cholesky_append_row, gram_chol_augment, gs_update, retriangularize_append, round_precision,
    trunc_svd, trunc_sym_eig, AppendMode, Orientation, PrecisionMode, Triangular,
};
use streamdmd::meyer_extend;

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn random_triangular(seed: u64, r: usize, orientation: Orientation) -> Triangular {
    let mut g = rng(seed);
    let a = with_condition(&mut g, r, r + 3, 1e3);
    let (t, _) = streamdmd::linalg::tq_factor(&a, orientation).unwrap();
    t
}

fn sv_rel_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (sa, sb) = (singular_values(a), singular_values(b));
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / sa[0]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gs_output_is_orthogonal(seed in any::<u64>(), k in 0usize..=50, extra in 1usize..20) {
        let mut g = rng(seed);
        let m = k + extra;
        let q = gaussian(&mut g, m, k).qr().q().columns(0, k).into_owned();
        let x = gaussian_vec(&mut g, m);
        let out = gs_update(&q, &x, 1e-14, 0.1).unwrap();
        if let Some(qn) = &out.q {
            let defect = (q.transpose() * qn).amax();
            prop_assert!(defect <= 10.0 * k.max(1) as f64 * f64::EPSILON, "defect {defect:e} at k={k}");
            prop_assert!((qn.norm() - 1.0).abs() < 1e-14);
        }
        // x is reproduced by the extended coefficients
        let rebuilt = &q * &out.g + out.q.as_ref().map_or(DVector::zeros(m), |qn| qn * out.gamma);
        prop_assert!((rebuilt - &x).norm() <= 1e-13 * x.norm());
    }

    #[test]
    fn cholesky_append_row_matches_qr(seed in any::<u64>(), m in 1usize..12, extra in 0usize..20, log_kappa in 0.0f64..6.0) {
        let mut g = rng(seed);
        let x = with_condition(&mut g, m, m + extra, 10f64.powf(log_kappa));
        let mut r = Triangular::from_diagonal(&vec![0.0; m], Orientation::Upper);
        for j in 0..x.ncols() {
            r = cholesky_append_row(&r, &col(&x, j)).unwrap();
        }
        // an independent Householder factor of Xᵀ with a positive diagonal
        let qr = x.transpose().qr();
        let mut want = qr.r();
        for i in 0..m {
            if want[(i, i)] < 0.0 {
                want.row_mut(i).neg_mut();
            }
        }
        prop_assert!(rel(r.matrix(), &want) <= 1e-12, "factor gap {:e}", rel(r.matrix(), &want));
        let gram = &x * x.transpose();
        prop_assert!(rel(&(r.matrix().transpose() * r.matrix()), &gram) <= 1e-12);
    }

    #[test]
    fn retriangularize_border_upper(seed in any::<u64>(), r in 1usize..10, gamma in 0.01f64..10.0) {
        border_case(seed, r, gamma, Orientation::Upper)?;
    }

    #[test]
    fn retriangularize_border_lower(seed in any::<u64>(), r in 1usize..10, gamma in 0.01f64..10.0) {
        border_case(seed, r, gamma, Orientation::Lower)?;
    }

    #[test]
    fn retriangularize_absorb_upper(seed in any::<u64>(), r in 1usize..10) {
        absorb_case(seed, r, Orientation::Upper)?;
    }

    #[test]
    fn retriangularize_absorb_lower(seed in any::<u64>(), r in 1usize..10) {
        absorb_case(seed, r, Orientation::Lower)?;
    }

    #[test]
    fn gram_chol_augment_multiplies_back(seed in any::<u64>(), n in 1usize..10, gamma in 0.01f64..10.0) {
        let mut g = rng(seed);
        let a = with_condition(&mut g, n, n + 4, 1e3);
        let gv = gaussian_vec(&mut g, n);
        let base = &a * a.transpose() + &gv * gv.transpose();
        let l = Triangular::from_matrix(base.clone().cholesky().unwrap().l(), Orientation::Lower).unwrap();
        let out = gram_chol_augment(&l, &gv, gamma).unwrap();
        let mut want = base.resize(n + 1, n + 1, 0.0);
        for i in 0..n {
            want[(i, n)] = gamma * gv[i];
            want[(n, i)] = gamma * gv[i];
        }
        want[(n, n)] = gamma * gamma;
        let f = out.matrix();
        prop_assert!(rel(&(f * f.transpose()), &want) <= 1e-12);
        prop_assert!((0..=n).all(|i| f[(i, i)] > 0.0));
    }

    #[test]
    fn meyer_extend_inverts_bordered_gram(seed in any::<u64>(), n in 1usize..10, gamma in 0.1f64..10.0) {
        let mut g = rng(seed);
        let a = gaussian(&mut g, n, n + 3);
        let gram = &a * a.transpose() + DMatrix::identity(n, n);
        let gv = gaussian_vec(&mut g, n);
        let g_inv = gram.clone().try_inverse().unwrap();
        let ext = meyer_extend(&g_inv, &gv, gamma).unwrap();
        let mut bordered = (gram + &gv * gv.transpose()).resize(n + 1, n + 1, 0.0);
        for i in 0..n {
            bordered[(i, n)] = gamma * gv[i];
            bordered[(n, i)] = gamma * gv[i];
        }
        bordered[(n, n)] = gamma * gamma;
        let id = DMatrix::identity(n + 1, n + 1);
        prop_assert!((&ext * &bordered - &id).norm() <= 1e-12 * (n + 1) as f64 * cond(&bordered));
        prop_assert!((&ext * &bordered - &id).norm() <= 1e-10);
    }
}

fn border_case(
    seed: u64,
    r: usize,
    gamma: f64,
    orientation: Orientation,
) -> Result<(), TestCaseError> {
    let t = random_triangular(seed, r, orientation);
    let mut g = rng(seed ^ 0x5bd1);
    let v = gaussian_vec(&mut g, r);
    let out = retriangularize_append(&t, &v, AppendMode::Border { gamma }).unwrap();
    let mut bar = t.matrix().clone().resize(r + 1, r + 1, 0.0);
    for i in 0..r {
        bar[(i, r)] = v[i];
    }
    bar[(r, r)] = gamma;
    prop_assert!(!out.dropped_last);
    prop_assert!(sv_rel_gap(&bar, out.factor.matrix()) <= 1e-13);
    let mut replay = bar.clone();
    streamdmd::linalg::apply_rotations_to_columns(&mut replay, &out.rotations);
    prop_assert!(rel(&replay, out.factor.matrix()) <= 1e-13);
    assert_triangular(out.factor.matrix(), orientation)
}

fn absorb_case(seed: u64, r: usize, orientation: Orientation) -> Result<(), TestCaseError> {
    let t = random_triangular(seed, r, orientation);
    let mut g = rng(seed ^ 0x77ee);
    let v = gaussian_vec(&mut g, r) * g.random_range(0.01..10.0);
    let out = retriangularize_append(&t, &v, AppendMode::Absorb).unwrap();
    let mut wide = t.matrix().clone().resize(r, r + 1, 0.0);
    for i in 0..r {
        wide[(i, r)] = v[i];
    }
    prop_assert!(out.dropped_last);
    prop_assert!(sv_rel_gap(&wide, out.factor.matrix()) <= 1e-13);
    let mut replay = wide.clone().resize(r + 1, r + 1, 0.0);
    streamdmd::linalg::apply_rotations_to_columns(&mut replay, &out.rotations);
    let scale = wide.norm();
    prop_assert!(replay.column(r).norm() <= 1e-13 * scale);
    prop_assert!((replay.view((0, 0), (r, r)) - out.factor.matrix()).norm() <= 1e-13 * scale);
    assert_triangular(out.factor.matrix(), orientation)
}

fn assert_triangular(f: &DMatrix<f64>, orientation: Orientation) -> Result<(), TestCaseError> {
    let n = f.nrows();
    for i in 0..n {
        prop_assert!(f[(i, i)] >= 0.0);
        for j in 0..n {
            let outside = match orientation {
                Orientation::Upper => i > j,
                Orientation::Lower => i < j,
            };
            if outside {
                prop_assert_eq!(f[(i, j)], 0.0);
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn truncated_eig_meets_eckart_young(seed in any::<u64>(), n in 2usize..12, tol_exp in 2.0f64..12.0) {
        let mut g = rng(seed);
        let a = with_condition(&mut g, n, n, 1e14);
        let gram = &a * a.transpose();
        let tol = 10f64.powf(-tol_exp);
        let e = trunc_sym_eig(&gram, tol).unwrap();
        let k = e.rank;
        let om = e.vectors.columns(0, k);
        let rebuilt = om * DMatrix::from_diagonal(&e.values.rows(0, k).into_owned()) * om.transpose();
        let top = singular_values(&gram)[0];
        prop_assert!(singular_values(&(&gram - rebuilt))[0] <= tol * top * (1.0 + 1e-8) + 1e-15 * top);

        let s = trunc_svd(&a, tol).unwrap();
        let k = s.rank;
        let rebuilt = s.u.columns(0, k) * DMatrix::from_diagonal(&s.sigma.rows(0, k).into_owned()) * s.v.columns(0, k).transpose();
        let top = singular_values(&a)[0];
        let gap = singular_values(&(&a - &rebuilt))[0];
        prop_assert!(gap <= tol * top * (1.0 + 1e-8) + 1e-15 * top, "gap {gap:e} rank {k} sigma {:?} tol {tol:e}", s.sigma);
    }

    #[test]
    fn truncation_monotone_in_tolerance(seed in any::<u64>(), n in 2usize..12) {
        let mut g = rng(seed);
        let a = with_condition(&mut g, n, n + 2, 1e12);
        let ranks: Vec<usize> = [1e-1, 1e-3, 1e-6, 1e-9, 1e-12].iter().map(|t| trunc_svd(&a, *t).unwrap().rank).collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn single_rounding_is_idempotent(seed in any::<u64>()) {
        let mut g = rng(seed);
        let a = gaussian(&mut g, 7, 5) * 1e3;
        let once = round_precision(&a, PrecisionMode::Simulated32);
        prop_assert_eq!(round_precision(&once, PrecisionMode::Simulated32), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn svd_converges_on_bordered_triangular_factors(seed in any::<u64>(), r in 1usize..12) {
        let orientation = if seed % 2 == 0 { Orientation::Upper } else { Orientation::Lower };
        let t = random_triangular(seed, r, orientation);
        let mut g = rng(seed ^ 0x3c3c);
        let v = gaussian_vec(&mut g, r);
        let mut wide = t.matrix().clone().resize(r, r + 1, 0.0);
        wide.view_mut((0, r), (r, 1)).copy_from(&v);
        let s = trunc_svd(&wide, 1e-12).unwrap();
        let rebuilt = &s.u * DMatrix::from_diagonal(&s.sigma) * s.v.transpose();
        prop_assert!(rel(&rebuilt, &wide) <= 1e-14);
    }
}
