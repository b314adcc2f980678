//! Batch and streaming dynamic mode decomposition.
//!
//! The streaming states keep an orthonormal basis of the snapshots seen so far
//! together with small cross-product or triangular factors, so Ritz pairs,
//! residuals and exact DMD vectors are available after every update without
//! touching the full data again.

// `!(x > t)` is used on purpose so that NaN fails acceptance tests
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod config;
pub mod error;
pub mod kmd;
pub mod linalg;
pub mod one_basis;
pub mod online;
pub mod ritz;
pub mod runner;
pub mod two_basis;

pub use batch::{dmd_batch, exact_dmd_matrix, BatchDmd};
pub use config::{InitMethod, StreamConfig};
pub use error::{DmdError, Result};
pub use kmd::{kmd_fit, kmd_fit_ritz, select_modes, Forecast, KmdResult, ModeSelection, Weights};
pub use one_basis::{OneBasisBackend, OneBasisState, OneBasisStep};
pub use online::{meyer_extend, OnlineConfig, OnlineState, OnlineStep, OnlineVariant};
pub use ritz::{BasisTag, RitzSet};
pub use runner::{run, Event, Method, MetricsRecord, RunConfig, RunOutcome};
pub use two_basis::{TwoBasisBackend, TwoBasisState, TwoBasisStep};
