//! Desk-scale acceptance checks shared by `streamdmd selfcheck` and the
//! `acceptance` test target.

mod experiments;
mod properties;

use std::fmt;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use streamdmd::linalg::{trunc_svd, C64};

pub use experiments::{
    chua_error_bound, gray_scott_precision_parity, gray_scott_single_precision,
    reduced_basis_speedup,
};
pub use properties::{
    batch_equivalence, exact_mode_eigenproperty, gram_condition_square, kernel_identities,
    kmd_recovery, residual_dichotomy,
};

/// Outcome of one criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    fn check(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub run: fn() -> Verdict,
}

impl Criterion {
    /// Runs the check and formats its report line.
    pub fn evaluate(&self) -> Report {
        let start = Instant::now();
        let verdict = (self.run)();
        Report {
            id: self.id,
            title: self.title,
            verdict,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

pub struct Report {
    pub id: u8,
    pub title: &'static str,
    pub verdict: Verdict,
    pub seconds: f64,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.verdict.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] {:>2} {} ({:.1}s): {}",
            self.id, self.title, self.seconds, self.verdict.detail
        )
    }
}

pub const CRITERIA: [Criterion; 10] = [
    Criterion {
        id: 1,
        title: "batch equivalence",
        run: batch_equivalence,
    },
    Criterion {
        id: 2,
        title: "online error bound",
        run: chua_error_bound,
    },
    Criterion {
        id: 3,
        title: "simulated-single robustness",
        run: gray_scott_single_precision,
    },
    Criterion {
        id: 4,
        title: "precision parity",
        run: gray_scott_precision_parity,
    },
    Criterion {
        id: 5,
        title: "residual dichotomy",
        run: residual_dichotomy,
    },
    Criterion {
        id: 6,
        title: "kernel identities",
        run: kernel_identities,
    },
    Criterion {
        id: 7,
        title: "condition-number relation",
        run: gram_condition_square,
    },
    Criterion {
        id: 8,
        title: "exact-mode eigenproperty",
        run: exact_mode_eigenproperty,
    },
    Criterion {
        id: 9,
        title: "mode-fit exact recovery",
        run: kmd_recovery,
    },
    Criterion {
        id: 10,
        title: "reduced-basis speedup",
        run: reduced_basis_speedup,
    },
];

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `U diag(σ) Vᵀ` with log-spaced singular values from 1 down to `1/kappa`.
fn with_condition(rng: &mut ChaCha8Rng, rows: usize, cols: usize, kappa: f64) -> DMatrix<f64> {
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

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    trunc_svd(m, 0.5)
        .map(|s| s.sigma.iter().copied().collect())
        .unwrap_or_default()
}

/// `Y X⁺` through an SVD pseudoinverse with relative cutoff `tol`.
fn lstsq_operator(x: &DMatrix<f64>, y: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let Ok(svd) = trunc_svd(x, tol) else {
        return DMatrix::from_element(y.nrows(), x.nrows(), f64::NAN);
    };
    let k = svd.rank;
    let mut yv = y * svd.v.columns(0, k);
    for j in 0..k {
        yv.column_mut(j).scale_mut(1.0 / svd.sigma[j]);
    }
    yv * svd.u.columns(0, k).transpose()
}

fn cmat(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn col(m: &DMatrix<f64>, j: usize) -> DVector<f64> {
    m.column(j).into_owned()
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Tracks the worst value of a check together with where it happened.
struct Worst {
    value: f64,
    at: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: 0.0,
            at: String::new(),
        }
    }

    fn record(&mut self, value: f64, at: impl FnOnce() -> String) {
        if value > self.value || value.is_nan() {
            self.value = if value.is_nan() { f64::INFINITY } else { value };
            self.at = at();
        }
    }
}

impl fmt::Display for Worst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.at.is_empty() {
            write!(f, "{:.2e}", self.value)
        } else {
            write!(f, "{:.2e} ({})", self.value, self.at)
        }
    }
}
