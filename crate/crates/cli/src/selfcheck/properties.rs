//! Seeded property checks: oracle equivalence, kernel identities and mode fits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use streamdmd::linalg::{
    apply_rotations_to_columns, cholesky_append_row, cond2, eig_real, gram_chol_augment, norm2,
    retriangularize_append, tq_factor, AppendMode, Orientation, PrecisionMode, Triangular, C64,
};
use streamdmd::ritz::max_matched_distance;
use streamdmd::{
    dmd_batch, kmd_fit, meyer_extend, BasisTag, OneBasisBackend, OneBasisState, OnlineConfig,
    OnlineState, OnlineVariant, RitzSet, StreamConfig, TwoBasisBackend, TwoBasisState,
};
use streamdmd_datagen::{synth_linear_stream, synth_operator};

use super::{
    cmat, col, gaussian, gaussian_vec, lstsq_operator, rng, singular_values, with_condition,
    Verdict, Worst,
};

const TWO_BASIS: [TwoBasisBackend; 3] = [
    TwoBasisBackend::Gram,
    TwoBasisBackend::Tq,
    TwoBasisBackend::Cholesky,
];
const ONE_BASIS: [OneBasisBackend; 3] = [
    OneBasisBackend::Gram,
    OneBasisBackend::Tq,
    OneBasisBackend::Exp,
];
const ONLINE: [OnlineVariant; 3] = [
    OnlineVariant::ShermanMorrison,
    OnlineVariant::Cholesky,
    OnlineVariant::Tq,
];

type Check<T> = Result<T, String>;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn noisy_stream(seed: u64, m: usize, n: usize, noise: f64) -> Check<DMatrix<f64>> {
    let mut g = rng(seed ^ 0xa5a5);
    let op = synth_operator(m, 0.7, 1.0, seed).map_err(fail)?;
    let x0 = DVector::from_fn(m, |_, _| g.random_range(-1.0..1.0));
    Ok(synth_linear_stream(&op.a, &x0, n, noise, seed)
        .map_err(fail)?
        .data)
}

fn xy(s: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = s.ncols() - 1;
    (s.columns(0, n).into_owned(), s.columns(1, n).into_owned())
}

fn two_basis_run(
    s: &DMatrix<f64>,
    n0: usize,
    cfg: &StreamConfig,
    be: TwoBasisBackend,
) -> Check<TwoBasisState> {
    let mut st = TwoBasisState::new(
        &s.columns(0, n0 - 1).into_owned(),
        &s.columns(1, n0 - 1).into_owned(),
        cfg.clone(),
        be,
    )
    .map_err(fail)?;
    for j in n0..s.ncols() {
        st.add_pair(&col(s, j - 1), &col(s, j)).map_err(fail)?;
    }
    Ok(st)
}

fn one_basis_run(
    s: &DMatrix<f64>,
    n0: usize,
    cfg: &StreamConfig,
    be: OneBasisBackend,
) -> Check<OneBasisState> {
    let mut st =
        OneBasisState::new(&s.columns(0, n0).into_owned(), cfg.clone(), be).map_err(fail)?;
    for j in n0..s.ncols() {
        st.add_snapshot(&col(s, j)).map_err(fail)?;
    }
    Ok(st)
}

fn verdict(result: Check<(bool, String)>) -> Verdict {
    match result {
        Ok((passed, detail)) => Verdict::check(passed, detail),
        Err(e) => Verdict::check(false, format!("error: {e}")),
    }
}

/// Streaming Ritz values against the batch method on the accumulated data.
pub fn batch_equivalence() -> Verdict {
    verdict((|| {
        let mut worst = Worst::new();
        let mut streams = 0;
        let mut seed = 0u64;
        while streams < 50 {
            seed += 1;
            let mut g = rng(seed);
            let m = g.random_range(3..=64);
            let n = g.random_range(6..=40);
            let s = noisy_stream(seed, m, n + 1, 0.05)?;
            let (x, y) = xy(&s);
            if cond2(&x) > 1e5 {
                continue;
            }
            streams += 1;
            let batch = dmd_batch(&x, &y, 1e-12).map_err(fail)?;
            let cfg = StreamConfig::for_dimension(m, PrecisionMode::Full64);
            let n0 = if m < n { m + 2 } else { 3 };
            let mut record = |name: String, values: &[C64]| {
                let d = max_matched_distance(values, &batch.ritz.eigenvalues);
                worst.record(d, || format!("{name}, seed {seed}, m={m}, n={n}"));
            };
            for be in TWO_BASIS {
                record(
                    format!("{be:?}"),
                    &two_basis_run(&s, n0, &cfg, be)?
                        .ritz()
                        .map_err(fail)?
                        .eigenvalues,
                );
            }
            for be in ONE_BASIS {
                record(
                    format!("{be:?}"),
                    &one_basis_run(&s, n0, &cfg, be)?
                        .ritz()
                        .map_err(fail)?
                        .eigenvalues,
                );
            }
            if m < n {
                for v in ONLINE {
                    let mut st = OnlineState::new(
                        &s.columns(0, n0 - 1).into_owned(),
                        &s.columns(1, n0 - 1).into_owned(),
                        v,
                        OnlineConfig::default(),
                    )
                    .map_err(fail)?;
                    for j in n0..=n {
                        st.update(&col(&s, j - 1), &col(&s, j)).map_err(fail)?;
                    }
                    let e = eig_real(&st.operator().map_err(fail)?).map_err(fail)?;
                    record(format!("{v:?}"), &e.values);
                }
            }
        }
        Ok((
            worst.value <= 1e-8,
            format!("{streams} streams, worst matched eigenvalue gap {worst} (limit 1e-8)"),
        ))
    })())
}

/// Snapshots alternating at random between fresh directions and combinations of earlier ones.
fn mixed_stream(seed: u64, m: usize, n: usize) -> DMatrix<f64> {
    let mut g = rng(seed);
    let mut s = gaussian(&mut g, m, n);
    for j in 3..n {
        if g.random_bool(0.5) {
            let c = gaussian_vec(&mut g, j);
            let v = s.columns(0, j) * c;
            s.set_column(j, &(&v / v.norm()));
        }
    }
    s
}

/// Non-expanding steps have roundoff residuals; expanding steps report the lifted residuals.
pub fn residual_dichotomy() -> Verdict {
    verdict((|| {
        let (m, n, streams) = (80, 53, 10);
        let mut quiet = Worst::new();
        let mut lifted_gap = Worst::new();
        let (mut steps, mut expanding) = (0, 0);
        for seed in 0..streams {
            let s = mixed_stream(1000 + seed, m, n);
            let cfg = StreamConfig::for_dimension(m, PrecisionMode::Full64);
            for be in ONE_BASIS {
                let mut st = OneBasisState::new(&s.columns(0, 3).into_owned(), cfg.clone(), be)
                    .map_err(fail)?;
                for j in 3..n {
                    let step = st.add_snapshot(&col(&s, j)).map_err(fail)?;
                    let ritz = st.ritz().map_err(fail)?;
                    let b = norm2(&st.rayleigh_quotient().map_err(fail)?);
                    if be == OneBasisBackend::Gram {
                        steps += 1;
                    }
                    if step.gamma == 0.0 {
                        let top = ritz.residuals.iter().fold(0.0_f64, |a, r| a.max(*r));
                        quiet.record(top / b, || format!("{be:?}, stream {seed}, step {j}"));
                        continue;
                    }
                    if be == OneBasisBackend::Gram {
                        expanding += 1;
                    }
                    let (x, y) = (s.columns(0, j).into_owned(), s.columns(1, j).into_owned());
                    let a = cmat(&lstsq_operator(&x, &y, 1e-12));
                    let qx = cmat(&st.q().columns(0, st.rank_x()).into_owned());
                    for (i, lam) in ritz.eigenvalues.iter().enumerate() {
                        let v = &qx * ritz.coeffs.column(i);
                        let lifted = (&a * &v - &v * *lam).norm();
                        let gap = (lifted - ritz.residuals[i]).abs() / lifted.max(b);
                        lifted_gap
                            .record(gap, || format!("{be:?}, stream {seed}, step {j}, pair {i}"));
                    }
                }
            }
        }
        Ok((
            quiet.value <= 1e-10 && lifted_gap.value <= 1e-10,
            format!(
                "{steps} steps per backend ({expanding} expanding): non-expanding max residual/|B| {quiet}, \
                 expanding relative gap {lifted_gap} (limit 1e-10)"
            ),
        ))
    })())
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn sv_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let (sa, sb) = (singular_values(a), singular_values(b));
    if sa.len() != sb.len() || sa.is_empty() {
        return f64::INFINITY;
    }
    sa.iter()
        .zip(&sb)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / sa[0]
}

fn random_triangular(
    g: &mut rand_chacha::ChaCha8Rng,
    r: usize,
    orientation: Orientation,
) -> Check<Triangular> {
    let a = with_condition(g, r, r + 3, 1e3);
    Ok(tq_factor(&a, orientation).map_err(fail)?.0)
}

/// Multiply-back and singular-value oracles for the update kernels, 1000 instances each.
pub fn kernel_identities() -> Verdict {
    verdict((|| {
        const CASES: u64 = 1000;
        const LIMIT: f64 = 1e-12;
        let mut g = rng(6);
        let mut chol = Worst::new();
        let mut retri = Worst::new();
        let mut augment = Worst::new();
        let mut meyer = Worst::new();

        for case in 0..CASES {
            let m = g.random_range(1..12);
            let extra = g.random_range(0..20);
            let kappa = 10f64.powf(g.random_range(0.0..6.0));
            let x = with_condition(&mut g, m, m + extra, kappa);
            let mut r = Triangular::from_diagonal(&vec![0.0; m], Orientation::Upper);
            for j in 0..x.ncols() {
                r = cholesky_append_row(&r, &col(&x, j)).map_err(fail)?;
            }
            let gram = &x * x.transpose();
            chol.record(rel(&(r.matrix().transpose() * r.matrix()), &gram), || {
                format!("case {case}")
            });
        }

        for case in 0..CASES {
            let r = g.random_range(1..10);
            let orientation = if case % 2 == 0 {
                Orientation::Upper
            } else {
                Orientation::Lower
            };
            let t = random_triangular(&mut g, r, orientation)?;
            let v = gaussian_vec(&mut g, r);
            let border = (case / 2) % 2 == 0;
            let (before, out) = if border {
                let gamma = g.random_range(0.01..10.0);
                let out =
                    retriangularize_append(&t, &v, AppendMode::Border { gamma }).map_err(fail)?;
                let mut bar = t.matrix().clone().resize(r + 1, r + 1, 0.0);
                bar.view_mut((0, r), (r, 1)).copy_from(&v);
                bar[(r, r)] = gamma;
                (bar, out)
            } else {
                let out = retriangularize_append(&t, &v, AppendMode::Absorb).map_err(fail)?;
                let mut wide = t.matrix().clone().resize(r, r + 1, 0.0);
                wide.view_mut((0, r), (r, 1)).copy_from(&v);
                (wide, out)
            };
            let mut gap = sv_gap(&before, out.factor.matrix());
            // the recorded rotations reproduce the factor
            let mut replay = before.clone().resize(before.ncols(), before.ncols(), 0.0);
            apply_rotations_to_columns(&mut replay, &out.rotations);
            let k = out.factor.matrix().nrows();
            gap =
                gap.max((replay.view((0, 0), (k, k)) - out.factor.matrix()).norm() / before.norm());
            if !border {
                // the absorbed column is rotated away entirely
                gap = gap.max(replay.view((0, r), (r, 1)).norm() / before.norm());
            }
            retri.record(gap, || {
                format!(
                    "case {case}, {orientation:?}, {}",
                    if border { "border" } else { "absorb" }
                )
            });
        }

        for case in 0..CASES {
            let n = g.random_range(1..10);
            let gamma = g.random_range(0.01..10.0);
            let a = with_condition(&mut g, n, n + 4, 1e3);
            let gv = gaussian_vec(&mut g, n);
            let base = &a * a.transpose() + &gv * gv.transpose();
            let Some(l) = base.clone().cholesky() else {
                return Err(format!(
                    "augment case {case}: base Gram not positive definite"
                ));
            };
            let l = Triangular::from_matrix(l.l(), Orientation::Lower).map_err(fail)?;
            let out = gram_chol_augment(&l, &gv, gamma).map_err(fail)?;
            let mut want = base.resize(n + 1, n + 1, 0.0);
            for i in 0..n {
                want[(i, n)] = gamma * gv[i];
                want[(n, i)] = gamma * gv[i];
            }
            want[(n, n)] = gamma * gamma;
            let f = out.matrix();
            augment.record(rel(&(f * f.transpose()), &want), || format!("case {case}"));
        }

        for case in 0..CASES {
            let n = g.random_range(1..10);
            let gamma = g.random_range(0.1..10.0);
            let a = gaussian(&mut g, n, n + 3);
            let gram = &a * a.transpose() + DMatrix::identity(n, n);
            let gv = gaussian_vec(&mut g, n);
            let g_inv = gram.clone().try_inverse().ok_or("singular test Gram")?;
            let ext = meyer_extend(&g_inv, &gv, gamma).map_err(fail)?;
            let mut bordered = (gram + &gv * gv.transpose()).resize(n + 1, n + 1, 0.0);
            for i in 0..n {
                bordered[(i, n)] = gamma * gv[i];
                bordered[(n, i)] = gamma * gv[i];
            }
            bordered[(n, n)] = gamma * gamma;
            let id = DMatrix::<f64>::identity(n + 1, n + 1);
            meyer.record(rel(&(&ext * &bordered), &id), || format!("case {case}"));
        }

        let all = [&chol, &retri, &augment, &meyer];
        Ok((
            all.iter().all(|w| w.value <= LIMIT),
            format!(
                "{CASES} cases each, limit {LIMIT:e}: append-row {chol}; retriangularize {retri}; \
                 augment {augment}; bordered inverse {meyer}"
            ),
        ))
    })())
}

/// Condition of the Gram backend's cross-product against the square of the TQ factor's.
pub fn gram_condition_square() -> Verdict {
    verdict((|| {
        let s = noisy_stream(11, 60, 202, 1e-3)?;
        let cfg = StreamConfig::for_dimension(60, PrecisionMode::Full64).with_max_rank(40);
        let start = |be| {
            TwoBasisState::new(
                &s.columns(0, 1).into_owned(),
                &s.columns(1, 1).into_owned(),
                cfg.clone(),
                be,
            )
            .map_err(fail)
        };
        let (mut gram, mut tq) = (start(TwoBasisBackend::Gram)?, start(TwoBasisBackend::Tq)?);
        let mut worst = Worst::new();
        let mut steps = 0;
        for j in 2..s.ncols() {
            gram.add_pair(&col(&s, j - 1), &col(&s, j)).map_err(fail)?;
            tq.add_pair(&col(&s, j - 1), &col(&s, j)).map_err(fail)?;
            let kg = cond2(&gram.gram_x());
            let kt = cond2(tq.x_factor().ok_or("TQ state has no factor")?.matrix());
            let ratio = kg / (kt * kt);
            // distance from 1 on a log scale, as a factor
            worst.record(ratio.max(1.0 / ratio), || {
                format!("step {j}, cond(Gx) {kg:.2e}")
            });
            steps += 1;
        }
        Ok((
            worst.value <= 10.0,
            format!("{steps} steps, worst factor {worst} (limit 10)"),
        ))
    })())
}

fn lift_exact(ritz: &RitzSet, qx: &DMatrix<f64>, qy: &DMatrix<f64>) -> Check<DMatrix<C64>> {
    let basis = match ritz.exact_basis.ok_or("no exact modes")? {
        BasisTag::Qy | BasisTag::Q => qy,
        BasisTag::Qx => qx,
        BasisTag::Ambient | BasisTag::Uk => {
            return ritz
                .exact_coeffs
                .clone()
                .ok_or_else(|| "no exact modes".into())
        }
    };
    ritz.lift_exact(basis)
        .ok_or_else(|| "exact modes failed to lift".into())
}

/// Lifted exact modes are eigenvectors of the least-squares operator.
pub fn exact_mode_eigenproperty() -> Verdict {
    verdict((|| {
        let mut worst = Worst::new();
        let mut tested = 0;
        for seed in 0..10u64 {
            let m = 8 + seed as usize;
            let s = noisy_stream(300 + seed, m, 3 * m + 1, 0.05)?;
            let (x, y) = xy(&s);
            let a = cmat(&lstsq_operator(&x, &y, 1e-12));
            let mut check = |name: &str, ritz: &RitzSet, z: &DMatrix<C64>| {
                for (i, lam) in ritz.eigenvalues.iter().enumerate() {
                    if ritz.residuals[i] > 1e-8 {
                        continue;
                    }
                    let zi = z.column(i).into_owned();
                    let err = (&a * &zi - &zi * *lam).norm() / zi.norm();
                    worst.record(err, || format!("{name}, seed {seed}, mode {i}"));
                    tested += 1;
                }
            };
            let batch = dmd_batch(&x, &y, 1e-12).map_err(fail)?;
            check(
                "batch",
                &batch.ritz,
                &lift_exact(&batch.ritz, &batch.uk, &batch.uk)?,
            );
            let cfg = StreamConfig::for_dimension(m, PrecisionMode::Full64);
            for be in TWO_BASIS {
                let st = two_basis_run(&s, 3, &cfg, be)?;
                let r = st.ritz().map_err(fail)?;
                check(&format!("{be:?}"), &r, &lift_exact(&r, st.qx(), st.qy())?);
            }
            for be in ONE_BASIS {
                let st = one_basis_run(&s, 3, &cfg, be)?;
                let r = st.ritz().map_err(fail)?;
                check(&format!("{be:?}"), &r, &lift_exact(&r, st.q(), st.q())?);
            }
        }
        Ok((
            tested > 0 && worst.value <= 1e-8,
            format!("{tested} modes with residual <= 1e-8, worst relative eigen-defect {worst} (limit 1e-8)"),
        ))
    })())
}

/// Amplitudes and forecasts of data that is an exact four-term expansion.
pub fn kmd_recovery() -> Verdict {
    verdict((|| {
        let p = 12;
        let mut amp = Worst::new();
        let mut fc = Worst::new();
        for seed in 0..20u64 {
            let mut g = rng(900 + seed);
            let m = 9;
            let mut modes = DMatrix::zeros(m, 4);
            let mut lams = Vec::new();
            let mut alphas = Vec::new();
            for k in 0..2 {
                let z = gaussian_vec(&mut g, m).zip_map(&gaussian_vec(&mut g, m), C64::new);
                modes.set_column(2 * k, &z);
                modes.set_column(2 * k + 1, &z.conjugate());
                let lam = C64::from_polar(
                    g.random_range(0.85..1.0),
                    g.random_range(0.2..1.4) + k as f64 * 1.5,
                );
                lams.extend([lam, lam.conj()]);
                let a = C64::new(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0));
                alphas.extend([a, a.conj()]);
            }
            let snapshot = |i: usize| -> DVector<f64> {
                let mut out = DVector::<C64>::zeros(m);
                for j in 0..4 {
                    out += modes.column(j) * (alphas[j] * lams[j].powu(i as u32));
                }
                out.map(|z| z.re)
            };
            let window = DMatrix::from_columns(&(0..p).map(snapshot).collect::<Vec<_>>());
            let fit = kmd_fit(&window, &modes, &lams, &vec![1.0; p]).map_err(fail)?;
            let err = fit
                .amplitudes
                .iter()
                .zip(&alphas)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            amp.record(err, || format!("seed {seed}"));
            for k in 1..=5 {
                let truth = snapshot(p - 1 + k);
                let e = (&fit.forecast(k).values - &truth).amax() / truth.amax().max(1.0);
                fc.record(e, || format!("seed {seed}, k={k}"));
            }
        }
        Ok((
            amp.value <= 1e-10 && fc.value <= 1e-9,
            format!(
                "max amplitude error {amp} (limit 1e-10), max forecast error {fc} (limit 1e-9)"
            ),
        ))
    })())
}
