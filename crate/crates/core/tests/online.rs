//! Online full-rank updates against the least-squares operator of the accumulated data.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use streamdmd::linalg::{cond2, norm2};
use streamdmd::{OnlineConfig, OnlineState, OnlineVariant};
use streamdmd_datagen::{synth_linear_stream, synth_operator};

fn stream(seed: u64, m: usize, n: usize, noise: f64) -> DMatrix<f64> {
    let op = synth_operator(m, 0.8, 1.0, seed).unwrap();
    let x0 = DVector::from_element(m, 1.0);
    synth_linear_stream(&op.a, &x0, n, noise, seed)
        .unwrap()
        .data
}

fn init(s: &DMatrix<f64>, n0: usize, v: OnlineVariant) -> OnlineState {
    OnlineState::new(
        &s.columns(0, n0).into_owned(),
        &s.columns(1, n0).into_owned(),
        v,
        OnlineConfig::default(),
    )
    .unwrap()
}

#[test]
fn stable_variants_track_the_oracle() {
    for seed in 0..5u64 {
        let m = 8;
        let s = stream(seed, m, 160, 0.05);
        let n0 = 12;
        for v in [OnlineVariant::Cholesky, OnlineVariant::Tq] {
            let mut st = init(&s, n0, v);
            for j in n0..s.ncols() - 1 {
                st.update(&col(&s, j), &col(&s, j + 1)).unwrap();
                let x = s.columns(0, j + 1).into_owned();
                let y = s.columns(1, j + 1).into_owned();
                let kappa = cond2(&x);
                assert!(m as f64 * f64::EPSILON * kappa < 1e-2);
                let reference = lstsq_operator(&x, &y, 1e-15);
                let err = norm2(&(st.operator().unwrap() - &reference)) / norm2(&reference);
                let bound = 100.0 * m as f64 * f64::EPSILON * kappa;
                assert!(
                    err <= bound,
                    "seed {seed} {v:?} step {j}: {err:e} > {bound:e}"
                );
            }
        }
    }
}

#[test]
fn inverse_gram_shrinks_in_loewner_order() {
    let m = 6;
    let s = stream(3, m, 80, 0.1);
    let mut st = init(&s, m, OnlineVariant::ShermanMorrison);
    let mut g = rng(17);
    for j in m..s.ncols() - 1 {
        let before = st.inverse_gram().unwrap().clone();
        st.update(&col(&s, j), &col(&s, j + 1)).unwrap();
        let after = st.inverse_gram().unwrap();
        assert_eq!(after, &after.transpose());
        for _ in 0..10 {
            let probe = gaussian_vec(&mut g, m);
            let (a, b) = (probe.dot(&(after * &probe)), probe.dot(&(&before * &probe)));
            assert!(a <= b + 1e-10, "step {j}: {a} > {b}");
        }
    }
}

#[test]
fn cholesky_factor_condition_is_root_of_inverse_gram_condition() {
    let m = 6;
    let s = stream(9, m, 200, 0.02);
    let (mut sm, mut chol) = (
        init(&s, m, OnlineVariant::ShermanMorrison),
        init(&s, m, OnlineVariant::Cholesky),
    );
    for j in m..s.ncols() - 1 {
        sm.update(&col(&s, j), &col(&s, j + 1)).unwrap();
        chol.update(&col(&s, j), &col(&s, j + 1)).unwrap();
        let kr = cond2(chol.x_factor().unwrap().matrix());
        let kp = cond2(sm.inverse_gram().unwrap());
        let ratio = kr / kp.sqrt();
        assert!(
            (0.1..=10.0).contains(&ratio),
            "step {j}: {kr:e} vs sqrt {:e}",
            kp.sqrt()
        );
        // the estimator is order-of-magnitude
        let est = chol.cond_estimate();
        assert!(
            est >= kr / 10.0 && est <= kr * 10.0,
            "estimate {est:e} vs {kr:e}"
        );
    }
}

#[test]
fn variants_agree_on_well_conditioned_streams() {
    let mut g = rng(5);
    let m = 5;
    let x = gaussian(&mut g, m, 60);
    let y = gaussian(&mut g, m, 60);
    let mut states: Vec<_> = [
        OnlineVariant::ShermanMorrison,
        OnlineVariant::Cholesky,
        OnlineVariant::Tq,
    ]
    .into_iter()
    .map(|v| {
        OnlineState::new(
            &x.columns(0, m).into_owned(),
            &y.columns(0, m).into_owned(),
            v,
            OnlineConfig::default(),
        )
        .unwrap()
    })
    .collect();
    for j in m..60 {
        for st in &mut states {
            st.update(&col(&x, j), &col(&y, j)).unwrap();
        }
    }
    let reference = lstsq_operator(&x, &y, 1e-15);
    for st in &states {
        let err = (st.operator().unwrap() - &reference).norm() / reference.norm();
        assert!(err < 1e-12, "{:?}: {err:e}", st.variant());
        assert_eq!(st.steps(), 60 - m);
    }
    let _ = g.random::<f64>();
}

#[test]
fn rank_deficient_start_is_rejected() {
    let x = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 0.0]);
    for v in [
        OnlineVariant::ShermanMorrison,
        OnlineVariant::Cholesky,
        OnlineVariant::Tq,
    ] {
        assert!(OnlineState::new(&x, &x, v, OnlineConfig::default()).is_err());
    }
}
