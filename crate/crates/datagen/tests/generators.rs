//! Generator properties: determinism, stability and observable layout.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use streamdmd_datagen::{
    gray_scott, integrate_ode, rotation_blocks, synth_linear_stream, synth_lowrank_stream,
    GenError, GrayScottSpec, OdeSpec,
};

fn small_gray_scott(seed: u64) -> GrayScottSpec {
    GrayScottSpec {
        nx: 16,
        ny: 12,
        steps: 6,
        stride: 4,
        seed,
        ..GrayScottSpec::default()
    }
}

fn bits(m: &DMatrix<f64>) -> Vec<u64> {
    m.iter().map(|v| v.to_bits()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generators_repeat_bitwise(seed in any::<u64>(), noise in 0.0f64..0.5) {
        let a = gray_scott(&small_gray_scott(seed)).unwrap();
        let b = gray_scott(&small_gray_scott(seed)).unwrap();
        prop_assert_eq!(bits(&a.data), bits(&b.data));

        let a = synth_lowrank_stream(20, 4, 15, seed).unwrap();
        let b = synth_lowrank_stream(20, 4, 15, seed).unwrap();
        prop_assert_eq!(bits(&a.data), bits(&b.data));

        let op = rotation_blocks(&[0.9, 0.95], &[0.3, 0.7], 4);
        let x0 = DVector::from_element(4, 1.0);
        let a = synth_linear_stream(&op, &x0, 12, noise, seed).unwrap();
        let b = synth_linear_stream(&op, &x0, 12, noise, seed).unwrap();
        prop_assert_eq!(bits(&a.data), bits(&b.data));
    }

    #[test]
    fn ode_streams_repeat_bitwise(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let spec = OdeSpec::lorenz([x, y, z], 1e-2, 0.5);
        prop_assert_eq!(bits(&integrate_ode(&spec).unwrap().data), bits(&integrate_ode(&spec).unwrap().data));
    }

    #[test]
    fn lowrank_columns_stay_in_an_r_dimensional_span(seed in any::<u64>(), r in 1usize..6) {
        let s = synth_lowrank_stream(24, r, 30, seed).unwrap().data;
        let sv = s.singular_values();
        let mut sv: Vec<f64> = sv.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        prop_assert!(sv[r] <= 1e-12 * sv[0], "sigma_{} / sigma_1 = {:e}", r + 1, sv[r] / sv[0]);
    }
}

#[test]
fn gray_scott_default_is_stable_over_ten_thousand_steps() {
    let spec = GrayScottSpec {
        steps: 500,
        stride: 20,
        ..GrayScottSpec::default()
    };
    let s = gray_scott(&spec).unwrap();
    assert!(!s.blew_up);
    assert!(s
        .data
        .iter()
        .all(|v| v.is_finite() && (-1e-9..=1.0 + 1e-9).contains(v)));
    // the seeded spots spread instead of dissolving into the uniform state
    let cells = spec.nx * spec.ny;
    let last = s.data.column(spec.steps);
    let active = last.rows(cells, cells).iter().filter(|&&v| v > 0.1).count();
    assert!(active * 10 > cells, "only {active} of {cells} cells active");
}

#[test]
fn gray_scott_seeds_three_squares() {
    let spec = GrayScottSpec {
        steps: 0,
        ..GrayScottSpec::default()
    };
    let s = gray_scott(&spec).unwrap();
    let cells = spec.nx * spec.ny;
    let first = s.data.column(0);
    let side = (spec.nx as f64 / 10.0).round() as usize;
    let seeded = first
        .rows(cells, cells)
        .iter()
        .filter(|&&v| v == 0.25)
        .count();
    assert!(
        seeded > 0 && seeded <= 3 * side * side,
        "{seeded} seeded cells"
    );
    let u_seeded = first.rows(0, cells).iter().filter(|&&v| v == 0.5).count();
    assert_eq!(u_seeded, seeded);
}

#[test]
fn gray_scott_rejects_bad_parameters() {
    let bad = [
        GrayScottSpec {
            du: -1.0,
            ..GrayScottSpec::default()
        },
        GrayScottSpec {
            feed: f64::NAN,
            ..GrayScottSpec::default()
        },
        GrayScottSpec {
            spacing: 0.0,
            ..GrayScottSpec::default()
        },
        GrayScottSpec {
            stride: 0,
            ..GrayScottSpec::default()
        },
        GrayScottSpec {
            nx: 7,
            ..GrayScottSpec::default()
        },
    ];
    for spec in bad {
        assert!(
            matches!(gray_scott(&spec), Err(GenError::InvalidParam(_))),
            "{spec:?}"
        );
    }
}

#[test]
fn ode_observables_are_coordinates_and_their_squares() {
    let s = integrate_ode(&OdeSpec::chua([-0.7, 0.1, 0.1], 1e-3, 2.0)).unwrap();
    assert_eq!(s.m(), 6);
    assert_eq!(s.n(), 2001);
    for c in s.data.column_iter() {
        for i in 0..3 {
            assert_eq!(c[i + 3], c[i] * c[i]);
        }
    }
}

#[test]
fn rotation_stream_spectrum_is_recoverable() {
    let theta = 0.4;
    let op = rotation_blocks(&[1.0], &[theta], 2);
    let s = synth_linear_stream(&op, &DVector::from_vec(vec![1.0, 0.0]), 10, 0.0, 0)
        .unwrap()
        .data;
    let x = s.columns(0, 9).into_owned();
    let y = s.columns(1, 9).into_owned();
    let fit = &y * x.pseudo_inverse(1e-12).unwrap();
    let eig = fit.complex_eigenvalues();
    for z in eig.iter() {
        assert!((z.norm() - 1.0).abs() < 1e-12);
        assert!((z.im.abs() - theta.sin()).abs() < 1e-12, "{z}");
    }
}
