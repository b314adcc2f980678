//! Command-line driver for streaming DMD: data generation, stream runs with
//! per-step metrics, mode tables and the acceptance self-check.

pub mod commands;
pub mod error;
pub mod selfcheck;
pub mod snapshot_file;

pub use commands::{execute, Cli};
pub use error::CliError;
