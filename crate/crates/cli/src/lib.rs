//! Config-driven front end for the CBF safety-filter simulator.
//!
//! Subcommands: `simulate` (run a TOML scenario), `reproduce` (run a bundled
//! preset), `check-cbf` (barrier validity diagnostics), and `sweep` (rerun a
//! scenario across sampling intervals). Exit codes: 0 on success, 1 on errors,
//! 2 when `--strict` is set and the run violated the safe set.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] cbf_core::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Other(String),
}
