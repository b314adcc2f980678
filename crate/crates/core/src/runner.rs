//! Drives any method over a snapshot matrix and reports per-step metrics.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::batch::dmd_batch;
use crate::config::StreamConfig;
use crate::error::{DmdError, Result};
use crate::kmd::{kmd_fit_ritz, KmdResult, ModeSelection, Weights};
use crate::linalg::{norm2, PrecisionMode, C64};
use crate::one_basis::{OneBasisBackend, OneBasisState};
use crate::online::{OnlineConfig, OnlineState, OnlineVariant};
use crate::ritz::{assemble, BasisTag, RitzSet};
use crate::two_basis::{TwoBasisBackend, TwoBasisState};

/// Every method the runner can drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Batch,
    Hwr,
    Tq,
    Chol2b,
    OneBasis,
    OneBasisTq,
    Exp,
    OnlineSm,
    OnlineChol,
    OnlineTq,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::Batch,
        Method::Hwr,
        Method::Tq,
        Method::Chol2b,
        Method::OneBasis,
        Method::OneBasisTq,
        Method::Exp,
        Method::OnlineSm,
        Method::OnlineChol,
        Method::OnlineTq,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Batch => "batch",
            Method::Hwr => "hwr",
            Method::Tq => "tq",
            Method::Chol2b => "chol2b",
            Method::OneBasis => "one-basis",
            Method::OneBasisTq => "one-basis-tq",
            Method::Exp => "exp",
            Method::OnlineSm => "online-sm",
            Method::OnlineChol => "online-chol",
            Method::OnlineTq => "online-tq",
        }
    }

    pub fn is_online(self) -> bool {
        matches!(
            self,
            Method::OnlineSm | Method::OnlineChol | Method::OnlineTq
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = DmdError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| DmdError::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Notable things that happened during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Compressed,
    DefinitenessLost,
    Overflow,
    /// The small factor was too ill-conditioned to extract Ritz pairs.
    Singular,
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub method: String,
    pub rank_x: usize,
    pub rank_q: usize,
    pub gamma_x: f64,
    pub gamma_y: f64,
    pub ortho_defect: f64,
    pub cond_est: f64,
    pub residual_min: f64,
    pub residual_max: f64,
    /// Relative forecast error by step-ahead count.
    pub pred_err: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<Event>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_err: Option<f64>,
}

/// Everything a run needs besides the data.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub method: Method,
    /// Columns consumed by the initial batch.
    pub n0: usize,
    pub stream: StreamConfig,
    pub online: OnlineConfig,
    /// Largest forecast horizon; 0 disables forecasting.
    pub forecast: usize,
    /// Number of most recent snapshots used by the mode fit.
    pub window: usize,
    pub weights: Weights,
    pub selection: ModeSelection,
    /// Compare the method's operator against the batch least-squares operator each step.
    pub oracle: bool,
    /// Relative singular value cutoff of the batch method.
    pub batch_tol: f64,
    /// Fit modes on the final window even when not forecasting.
    pub fit_modes: bool,
}

impl RunConfig {
    pub fn new(method: Method, n0: usize, stream: StreamConfig) -> Self {
        Self {
            method,
            n0,
            stream,
            online: OnlineConfig {
                continue_on_definiteness_loss: true,
                ..OnlineConfig::default()
            },
            forecast: 0,
            window: 30,
            weights: Weights::Uniform,
            selection: ModeSelection::All,
            oracle: false,
            batch_tol: 1e-10,
            fit_modes: false,
        }
    }
}

/// Final state of a run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub records: usize,
    pub ritz: Option<RitzSet>,
    pub kmd: Option<KmdResult>,
}

enum Engine {
    Batch,
    Two(TwoBasisState),
    One(OneBasisState),
    Online(OnlineState),
}

struct Advance {
    gamma_x: f64,
    gamma_y: f64,
    transform: Option<DMatrix<f64>>,
    coeffs: DVector<f64>,
    events: Vec<Event>,
}

/// Keeps the coordinates of the most recent snapshots in the current basis.
struct CoeffWindow {
    cols: VecDeque<DVector<f64>>,
    cap: usize,
}

impl CoeffWindow {
    fn new(cap: usize) -> Self {
        Self {
            cols: VecDeque::new(),
            cap: cap.max(1),
        }
    }

    fn transform(&mut self, omega: &DMatrix<f64>) {
        for c in &mut self.cols {
            let head = c.rows(0, omega.nrows().min(c.len())).into_owned();
            let head = head.resize_vertically(omega.nrows(), 0.0);
            *c = omega.tr_mul(&head);
        }
    }

    fn push(&mut self, c: DVector<f64>) {
        let n = c.len();
        for old in &mut self.cols {
            if old.len() < n {
                *old = old.clone().resize_vertically(n, 0.0);
            }
        }
        self.cols.push_back(c);
        while self.cols.len() > self.cap {
            self.cols.pop_front();
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        let n = self.cols.back().map_or(0, |c| c.len());
        let padded: Vec<DVector<f64>> = self
            .cols
            .iter()
            .map(|c| c.clone().resize_vertically(n, 0.0))
            .collect();
        DMatrix::from_columns(&padded)
    }
}

fn relative_error(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    let t = truth.norm();
    let d = (pred - truth).norm();
    if t > 0.0 {
        d / t
    } else {
        d
    }
}

impl Engine {
    fn start(data: &DMatrix<f64>, cfg: &RunConfig) -> Result<(Self, CoeffWindow)> {
        let n0 = cfg.n0;
        let s0 = data.columns(0, n0).into_owned();
        let x0 = data.columns(0, n0 - 1).into_owned();
        let y0 = data.columns(1, n0 - 1).into_owned();
        let mut window = CoeffWindow::new(cfg.window);
        let engine = match cfg.method {
            Method::Batch => {
                for c in s0.column_iter() {
                    window.push(c.into_owned());
                }
                Engine::Batch
            }
            Method::Hwr | Method::Tq | Method::Chol2b => {
                let backend = match cfg.method {
                    Method::Hwr => TwoBasisBackend::Gram,
                    Method::Tq => TwoBasisBackend::Tq,
                    _ => TwoBasisBackend::Cholesky,
                };
                let st = TwoBasisState::new(&x0, &y0, cfg.stream.clone(), backend)?;
                for c in y0.column_iter() {
                    window.push(st.qy().tr_mul(&c));
                }
                Engine::Two(st)
            }
            Method::OneBasis | Method::OneBasisTq | Method::Exp => {
                let backend = match cfg.method {
                    Method::OneBasis => OneBasisBackend::Gram,
                    Method::OneBasisTq => OneBasisBackend::Tq,
                    _ => OneBasisBackend::Exp,
                };
                let st = OneBasisState::new(&s0, cfg.stream.clone(), backend)?;
                for c in s0.column_iter() {
                    window.push(st.q().tr_mul(&c));
                }
                Engine::One(st)
            }
            Method::OnlineSm | Method::OnlineChol | Method::OnlineTq => {
                if cfg.stream.precision != PrecisionMode::Full64 {
                    warn!("online methods run in full precision; the precision setting only rounds the data");
                }
                let variant = match cfg.method {
                    Method::OnlineSm => OnlineVariant::ShermanMorrison,
                    Method::OnlineChol => OnlineVariant::Cholesky,
                    _ => OnlineVariant::Tq,
                };
                let st = OnlineState::new(&x0, &y0, variant, cfg.online.clone())?;
                for c in s0.column_iter() {
                    window.push(c.into_owned());
                }
                Engine::Online(st)
            }
        };
        Ok((engine, window))
    }

    fn advance(&mut self, x: &DVector<f64>, y: &DVector<f64>, prev_gamma: f64) -> Result<Advance> {
        let mut events = Vec::new();
        match self {
            Engine::Batch => Ok(Advance {
                gamma_x: 0.0,
                gamma_y: 0.0,
                transform: None,
                coeffs: y.clone(),
                events,
            }),
            Engine::Two(st) => match st.add_pair(x, y) {
                Ok(step) => {
                    if step.x_compression.is_some() || step.y_compression.is_some() {
                        events.push(Event::Compressed);
                    }
                    Ok(Advance {
                        gamma_x: step.gamma_x,
                        gamma_y: step.gamma_y,
                        transform: step.y_compression,
                        coeffs: step.y_coeffs,
                        events,
                    })
                }
                Err(DmdError::LossOfDefiniteness(msg)) => {
                    warn!("pair skipped: {msg}");
                    Ok(Advance {
                        gamma_x: f64::NAN,
                        gamma_y: f64::NAN,
                        transform: None,
                        coeffs: st.qy().tr_mul(y),
                        events: vec![Event::DefinitenessLost],
                    })
                }
                Err(e) => Err(e),
            },
            Engine::One(st) => {
                let step = st.add_snapshot(y)?;
                if step.compression.is_some() {
                    events.push(Event::Compressed);
                }
                Ok(Advance {
                    gamma_x: prev_gamma,
                    gamma_y: step.gamma,
                    transform: step.compression,
                    coeffs: step.coeffs,
                    events,
                })
            }
            Engine::Online(st) => {
                let step = st.update(x, y)?;
                if step.definiteness_lost {
                    events.push(Event::DefinitenessLost);
                }
                Ok(Advance {
                    gamma_x: 0.0,
                    gamma_y: 0.0,
                    transform: None,
                    coeffs: y.clone(),
                    events,
                })
            }
        }
    }

    fn ritz(&self, data: &DMatrix<f64>, upto: usize, tol: f64) -> Result<RitzSet> {
        match self {
            Engine::Batch => {
                let x = data.columns(0, upto).into_owned();
                let y = data.columns(1, upto).into_owned();
                Ok(dmd_batch(&x, &y, tol)?.ritz)
            }
            Engine::Two(st) => st.ritz(),
            Engine::One(st) => st.ritz(),
            Engine::Online(st) => {
                let a = st.operator()?;
                let id = DMatrix::identity(a.nrows(), a.ncols());
                let a_ref = &a;
                assemble(
                    &a,
                    &id,
                    BasisTag::Ambient,
                    BasisTag::Ambient,
                    |lam, w, _| (crate::ritz::lift_vector(a_ref, w) - w * lam).norm(),
                )
            }
        }
    }

    /// Basis in which the window and exact modes are expressed; `None` means ambient.
    fn lift_basis(&self) -> Option<&DMatrix<f64>> {
        match self {
            Engine::Two(st) => Some(st.qy()),
            Engine::One(st) => Some(st.q()),
            Engine::Batch | Engine::Online(_) => None,
        }
    }

    /// The method's approximation of the full operator, formed densely.
    fn operator(&self) -> Result<DMatrix<f64>> {
        match self {
            Engine::Batch => Err(DmdError::InvalidConfig(
                "batch operator comes from the oracle itself".into(),
            )),
            Engine::Two(st) => Ok(st.qy() * st.exact_map()? * st.qx().transpose()),
            Engine::One(st) => {
                let qx = st.q().columns(0, st.rank_x());
                Ok(st.q() * st.exact_map()? * qx.transpose())
            }
            Engine::Online(st) => st.operator(),
        }
    }

    fn ranks(&self, m: usize, batch_rank: usize) -> (usize, usize) {
        match self {
            Engine::Batch => (batch_rank, batch_rank),
            Engine::Two(st) => (st.rank_x(), st.rank_y()),
            Engine::One(st) => (st.rank_x(), st.rank()),
            Engine::Online(_) => (m, m),
        }
    }

    fn ortho_defect(&self) -> f64 {
        match self {
            Engine::Two(st) => st.ortho_defect(),
            Engine::One(st) => st.ortho_defect(),
            Engine::Batch | Engine::Online(_) => 0.0,
        }
    }

    fn cond_estimate(&self, data: &DMatrix<f64>, upto: usize) -> f64 {
        match self {
            Engine::Batch => crate::linalg::cond2(&data.columns(0, upto).into_owned()),
            Engine::Two(st) => st.cond_estimate(),
            Engine::One(st) => st.cond_estimate(),
            Engine::Online(st) => st.cond_estimate(),
        }
    }
}

/// Relative two-norm error of `a` against the least-squares operator `Y X⁺` of the data so far.
fn oracle_error(a: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    let cut = f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    let reference = dmd_batch(x, y, cut)?;
    let full = &reference.bk * reference.uk.transpose();
    let scale = norm2(&full);
    let diff = norm2(&(a - &full));
    Ok(if scale > 0.0 { diff / scale } else { diff })
}

/// Runs `cfg.method` over the columns of `data`, calling `sink` once per streamed column.
pub fn run(
    data: &DMatrix<f64>,
    cfg: &RunConfig,
    mut sink: impl FnMut(MetricsRecord),
) -> Result<RunOutcome> {
    let (m, n) = data.shape();
    cfg.stream.validate()?;
    cfg.weights.validate()?;
    if cfg.n0 < 2 || cfg.n0 > n {
        return Err(DmdError::InvalidConfig(format!(
            "initial batch must hold between 2 and {n} columns, got {}",
            cfg.n0
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DmdError::NonFinite("snapshot data"));
    }
    if data.iter().all(|v| *v == 0.0) {
        return Err(DmdError::ZeroData);
    }
    let data = crate::linalg::round_precision(data, cfg.stream.precision);
    let (mut engine, mut window) = Engine::start(&data, cfg)?;
    let mut prev_gamma = 0.0;
    let mut last_ritz = None;
    let mut last_kmd = None;
    let mut records = 0;

    for j in cfg.n0..n {
        let x = data.column(j - 1).into_owned();
        let y = data.column(j).into_owned();
        let adv = engine.advance(&x, &y, prev_gamma)?;
        prev_gamma = adv.gamma_y;
        if let Some(t) = &adv.transform {
            window.transform(t);
        }
        window.push(adv.coeffs);
        let mut events = adv.events;

        let ritz = match engine.ritz(&data, j, cfg.batch_tol) {
            Ok(r) => Some(r),
            Err(DmdError::Singular { .. } | DmdError::NonFinite(_) | DmdError::ZeroData) => {
                events.push(Event::Singular);
                None
            }
            Err(e) => return Err(e),
        };
        let (residual_min, residual_max) = ritz.as_ref().map_or((f64::NAN, f64::NAN), |r| {
            let lo = r.residuals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = r.residuals.iter().copied().fold(0.0, f64::max);
            (lo, hi)
        });

        let mut pred_err = BTreeMap::new();
        if cfg.forecast == 0 && cfg.fit_modes && j + 1 == n {
            last_kmd = ritz.as_ref().and_then(|r| {
                kmd_fit_ritz(r, true, &window.matrix(), cfg.selection, cfg.weights).ok()
            });
        }
        if cfg.forecast > 0 {
            let horizons: Vec<usize> = (1..=cfg.forecast).filter(|k| j + k < n).collect();
            let fit = ritz.as_ref().and_then(|r| {
                kmd_fit_ritz(r, true, &window.matrix(), cfg.selection, cfg.weights).ok()
            });
            for k in horizons {
                let truth = data.column(j + k).into_owned();
                let err = match &fit {
                    Some(kmd) => {
                        let pred = match engine.lift_basis() {
                            Some(b) => kmd.forecast_lifted(k, b).values,
                            None => kmd.forecast(k).values,
                        };
                        relative_error(&pred, &truth)
                    }
                    None => f64::NAN,
                };
                if !err.is_finite() && fit.is_some() && !events.contains(&Event::Overflow) {
                    events.push(Event::Overflow);
                }
                pred_err.insert(k, err);
            }
            last_kmd = fit;
        }

        let oracle_err = if cfg.oracle && !matches!(engine, Engine::Batch) {
            let xs = data.columns(0, j).into_owned();
            let ys = data.columns(1, j).into_owned();
            Some(
                engine
                    .operator()
                    .and_then(|a| oracle_error(&a, &xs, &ys))
                    .unwrap_or(f64::NAN),
            )
        } else {
            None
        };

        let batch_rank = ritz.as_ref().map_or(0, |r| r.len());
        let (rank_x, rank_q) = engine.ranks(m, batch_rank);
        sink(MetricsRecord {
            step: j,
            method: cfg.method.name().to_string(),
            rank_x,
            rank_q,
            gamma_x: adv.gamma_x,
            gamma_y: adv.gamma_y,
            ortho_defect: engine.ortho_defect(),
            cond_est: engine.cond_estimate(&data, j),
            residual_min,
            residual_max,
            pred_err,
            events,
            oracle_err,
        });
        records += 1;
        last_ritz = ritz;
    }
    if last_ritz.is_none() {
        last_ritz = engine.ritz(&data, n - 1, cfg.batch_tol).ok();
    }
    Ok(RunOutcome {
        records,
        ritz: last_ritz,
        kmd: last_kmd,
    })
}

/// Forecast error helper shared with callers that hold their own predictions.
pub fn relative_forecast_error(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    relative_error(pred, truth)
}

/// Complex amplitude magnitudes of a fit, aligned with the Ritz indices it used.
pub fn amplitudes_by_index(kmd: &KmdResult, len: usize) -> Vec<Option<C64>> {
    let mut out = vec![None; len];
    for (k, &i) in kmd.mode_indices.iter().enumerate() {
        if i < len {
            out[i] = Some(kmd.amplitudes[k]);
        }
    }
    out
}
