//! Deterministic snapshot generators.
//!
//! Every generator is a pure function of its parameters and seed: calling it
//! twice gives bitwise identical snapshots.

pub mod gray_scott;
pub mod ode;
pub mod synth;

use nalgebra::DMatrix;
use thiserror::Error;

pub use gray_scott::{gray_scott, GrayScottSpec};
pub use ode::{integrate_ode, ChuaParams, LorenzParams, Monomial, OdeSpec, OdeSystem};
pub use synth::{
    rotation_blocks, synth_linear_stream, synth_lowrank_stream, synth_operator, SynthOperator,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error("invalid generator parameter: {0}")]
    InvalidParam(String),
    #[error("non-finite field at step {0}")]
    Unstable(usize),
}

pub type Result<T> = std::result::Result<T, GenError>;

/// Snapshots as columns, plus whether generation stopped early on blow-up.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotStream {
    pub data: DMatrix<f64>,
    pub blew_up: bool,
}

impl SnapshotStream {
    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }
}
