//! Experiment-style checks on generated dynamics and a timed comparison.

use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::DMatrix;
use streamdmd::linalg::{cond2, norm2, PrecisionMode};
use streamdmd::ritz::lift;
use streamdmd::{
    kmd_fit, kmd_fit_ritz, run, Method, ModeSelection, OneBasisBackend, OneBasisState,
    OnlineConfig, OnlineState, OnlineVariant, RunConfig, StreamConfig, Weights,
};
use streamdmd_datagen::{gray_scott, integrate_ode, synth_lowrank_stream, GrayScottSpec, OdeSpec};

use super::{col, lstsq_operator, median, Verdict};

/// Initial conditions and output steps of the three Chua runs.
const CHUA_RUNS: [([f64; 3], f64); 3] = [
    ([-0.7, 0.1, 0.1], 1e-3),
    ([-0.7, 0.1, 0.1], 1e-4),
    ([-10.7, 0.0, 0.0], 1e-3),
];
const CHUA_N0: usize = 100;
const CHUA_STEPS: usize = 2000;

struct ChuaTrace {
    label: String,
    /// Worst ratio of online error to the bound, per variant.
    ratio: [f64; 3],
    where_: [usize; 3],
}

fn chua_trace(x0: [f64; 3], dt: f64) -> Result<ChuaTrace, String> {
    let spec = OdeSpec::chua(x0, dt, (CHUA_N0 + CHUA_STEPS) as f64 * dt);
    let data = integrate_ode(&spec).map_err(|e| e.to_string())?.data;
    let (m, n) = data.shape();
    let variants = [
        OnlineVariant::ShermanMorrison,
        OnlineVariant::Cholesky,
        OnlineVariant::Tq,
    ];
    let cfg = OnlineConfig {
        continue_on_definiteness_loss: true,
        ..OnlineConfig::default()
    };
    let mut states = variants
        .iter()
        .map(|&v| {
            OnlineState::new(
                &data.columns(0, CHUA_N0).into_owned(),
                &data.columns(1, CHUA_N0).into_owned(),
                v,
                cfg.clone(),
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mut ratio = [0.0; 3];
    let mut where_ = [0; 3];
    for j in CHUA_N0..n - 1 {
        let (x, y) = (col(&data, j), col(&data, j + 1));
        let xs = data.columns(0, j + 1).into_owned();
        let ys = data.columns(1, j + 1).into_owned();
        let reference = lstsq_operator(&xs, &ys, 1e-15);
        let scale = norm2(&reference);
        let bound = 100.0 * m as f64 * f64::EPSILON * cond2(&xs);
        for (k, st) in states.iter_mut().enumerate() {
            // a failed update or operator counts as unbounded error
            let err = st
                .update(&x, &y)
                .and_then(|_| st.operator())
                .map(|a| norm2(&(a - &reference)) / scale)
                .unwrap_or(f64::INFINITY);
            let r = if err.is_nan() {
                f64::INFINITY
            } else {
                err / bound
            };
            if r > ratio[k] {
                ratio[k] = r;
                where_[k] = j;
            }
        }
    }
    Ok(ChuaTrace {
        label: format!("x0={x0:?} dt={dt:e}"),
        ratio,
        where_,
    })
}

/// Online variants against the least-squares operator on Chua trajectories.
pub fn chua_error_bound() -> Verdict {
    let mut traces = Vec::new();
    for (x0, dt) in CHUA_RUNS {
        match chua_trace(x0, dt) {
            Ok(t) => traces.push(t),
            Err(e) => return Verdict::check(false, format!("error: {e}")),
        }
    }
    // the stable variants must hold the bound on every run
    let stable_ok = traces
        .iter()
        .all(|t| t.ratio[1] <= 1.0 && t.ratio[2] <= 1.0);
    let sm_diverges = traces.iter().any(|t| t.ratio[0] > 1e3);
    let detail = traces
        .iter()
        .map(|t| {
            format!(
                "{}: err/bound sm {:.1e}@{} chol {:.1e}@{} tq {:.1e}@{}",
                t.label, t.ratio[0], t.where_[0], t.ratio[1], t.where_[1], t.ratio[2], t.where_[2]
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict::check(
        stable_ok && sm_diverges,
        format!("need err/bound <= 1 for chol and tq at every step and > 1e3 for sm somewhere. {detail}"),
    )
}

/// Explicit Euler steps between Gray-Scott snapshots.
pub const GRAY_SCOTT_STRIDE: usize = 20;
const GS_N0: usize = 30;
const GS_ADDED: usize = 150;
const GS_WINDOW: usize = 30;
/// Span tolerance shared by every Gray-Scott run so that only the precision
/// differs between them. Simulated single still computes updates in f64.
const GS_TOL1: f64 = 1e-4;

fn gray_scott_data() -> &'static Result<DMatrix<f64>, String> {
    static DATA: OnceLock<Result<DMatrix<f64>, String>> = OnceLock::new();
    DATA.get_or_init(|| {
        let spec = GrayScottSpec {
            nx: 96,
            ny: 96,
            steps: GS_N0 + GS_ADDED - 1,
            stride: GRAY_SCOTT_STRIDE,
            ..GrayScottSpec::default()
        };
        gray_scott(&spec).map(|s| s.data).map_err(|e| e.to_string())
    })
}

/// One-step forecast errors of a method on the shared Gray-Scott stream.
fn gray_scott_errors(method: Method, precision: PrecisionMode) -> Result<Vec<f64>, String> {
    let data = gray_scott_data().as_ref().map_err(Clone::clone)?;
    let stream = StreamConfig {
        tol1: GS_TOL1,
        ..StreamConfig::for_dimension(data.nrows(), precision)
    };
    let cfg = RunConfig {
        forecast: 1,
        window: GS_WINDOW,
        ..RunConfig::new(method, GS_N0, stream)
    };
    let mut errs = Vec::new();
    run(data, &cfg, |rec| {
        if let Some(e) = rec.pred_err.get(&1) {
            errs.push(*e);
        }
    })
    .map_err(|e| e.to_string())?;
    Ok(errs)
}

fn cached(
    slot: &'static OnceLock<Result<Vec<f64>, String>>,
    method: Method,
    p: PrecisionMode,
) -> Result<&'static [f64], String> {
    slot.get_or_init(|| gray_scott_errors(method, p))
        .as_deref()
        .map_err(Clone::clone)
}

fn tq_single() -> Result<&'static [f64], String> {
    static S: OnceLock<Result<Vec<f64>, String>> = OnceLock::new();
    cached(&S, Method::OneBasisTq, PrecisionMode::Simulated32)
}

fn gram_single() -> Result<&'static [f64], String> {
    static S: OnceLock<Result<Vec<f64>, String>> = OnceLock::new();
    cached(&S, Method::Hwr, PrecisionMode::Simulated32)
}

fn tq_double() -> Result<&'static [f64], String> {
    static S: OnceLock<Result<Vec<f64>, String>> = OnceLock::new();
    cached(&S, Method::OneBasisTq, PrecisionMode::Full64)
}

/// In simulated single precision the triangular one-basis method forecasts well
/// while the Gram two-basis method does not.
pub fn gray_scott_single_precision() -> Verdict {
    let (tq, gram) = match (tq_single(), gram_single()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Verdict::check(false, format!("error: {e}")),
    };
    let tq_med = median(tq);
    let finite: Vec<f64> = gram.iter().copied().filter(|e| e.is_finite()).collect();
    let gram_bad = gram.len() - finite.len();
    let gram_med = if finite.is_empty() {
        f64::INFINITY
    } else {
        median(&finite)
    };
    let passed = tq_med <= 1e-2 && (gram_bad > 0 || gram_med >= 10.0 * tq_med);
    Verdict::check(
        passed,
        format!(
            "{} steps: one-basis tq median {tq_med:.2e} (limit 1e-2); gram finite median {gram_med:.2e}, \
             {gram_bad} non-finite (need >= 10x or non-finite)",
            tq.len(),
        ),
    )
}

/// Per-step forecast errors in simulated single and double precision agree.
pub fn gray_scott_precision_parity() -> Verdict {
    let (single, double) = match (tq_single(), tq_double()) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Verdict::check(false, format!("error: {e}")),
    };
    if single.len() != double.len() || single.is_empty() {
        return Verdict::check(
            false,
            format!("step counts differ: {} vs {}", single.len(), double.len()),
        );
    }
    let within = single
        .iter()
        .zip(double)
        .filter(|(a, b)| a.is_finite() && b.is_finite() && a.max(**b) <= 3.0 * a.min(**b))
        .count();
    let fraction = within as f64 / single.len() as f64;
    Verdict::check(
        fraction >= 0.9,
        format!(
            "{within}/{} steps within a factor 3 ({:.0}%, need 90%); medians {:.2e} single, {:.2e} double",
            single.len(),
            100.0 * fraction,
            median(single),
            median(double)
        ),
    )
}

const SPEEDUP_M: usize = 200_000;
const SPEEDUP_RANK: usize = 20;
const SPEEDUP_WINDOW: usize = 20;
const SPEEDUP_COLUMNS: usize = 60;

/// Mode fit plus forecast in basis coordinates against the same fit on full snapshots.
pub fn reduced_basis_speedup() -> Verdict {
    let outcome = (|| -> Result<(f64, f64, f64), String> {
        let data = synth_lowrank_stream(SPEEDUP_M, SPEEDUP_RANK, SPEEDUP_COLUMNS, 10)
            .map_err(|e| e.to_string())?
            .data;
        let cfg = StreamConfig::for_dimension(SPEEDUP_M, PrecisionMode::Full64);
        let mut st = OneBasisState::new(&data.columns(0, 3).into_owned(), cfg, OneBasisBackend::Tq)
            .map_err(|e| e.to_string())?;
        let mut coeffs = Vec::new();
        for j in 3..data.ncols() {
            coeffs.push(
                st.add_snapshot(&col(&data, j))
                    .map_err(|e| e.to_string())?
                    .coeffs,
            );
        }
        let r = st.rank();
        let window = DMatrix::from_columns(
            &coeffs[coeffs.len() - SPEEDUP_WINDOW..]
                .iter()
                .map(|c| c.clone().resize_vertically(r, 0.0))
                .collect::<Vec<_>>(),
        );
        let full_window = data
            .columns(data.ncols() - SPEEDUP_WINDOW, SPEEDUP_WINDOW)
            .into_owned();
        let ritz = st.ritz().map_err(|e| e.to_string())?;
        let q = st.q();

        let mut reduced_time = f64::INFINITY;
        let mut lifted_time = f64::INFINITY;
        let (mut reduced, mut lifted) = (None, None);
        for _ in 0..3 {
            let t = Instant::now();
            let fit = kmd_fit_ritz(&ritz, true, &window, ModeSelection::All, Weights::Uniform)
                .map_err(|e| e.to_string())?;
            reduced = Some(fit.forecast_lifted(1, q).values);
            reduced_time = reduced_time.min(t.elapsed().as_secs_f64());

            let t = Instant::now();
            let modes = lift(q, ritz.exact_coeffs.as_ref().ok_or("no exact modes")?);
            let fit = kmd_fit(
                &full_window,
                &modes,
                &ritz.eigenvalues,
                &Weights::Uniform.values(SPEEDUP_WINDOW),
            )
            .map_err(|e| e.to_string())?;
            lifted = Some(fit.forecast(1).values);
            lifted_time = lifted_time.min(t.elapsed().as_secs_f64());
        }
        let (a, b) = (reduced.expect("ran"), lifted.expect("ran"));
        Ok((reduced_time, lifted_time, (&a - &b).norm() / b.norm()))
    })();
    match outcome {
        Ok((reduced, lifted, gap)) => {
            let speedup = lifted / reduced;
            Verdict::check(
                speedup >= 5.0 && gap <= 1e-6,
                format!(
                    "m={SPEEDUP_M}, rank {SPEEDUP_RANK}, window {SPEEDUP_WINDOW}: coefficients {:.3}s, lifted {:.3}s, \
                     speedup {speedup:.0}x (need 5x); forecasts differ by {gap:.1e}",
                    reduced, lifted
                ),
            )
        }
        Err(e) => Verdict::check(false, format!("error: {e}")),
    }
}
