//! Experiment runner around [`socialquant`]: a TOML config describes agents,
//! the communication matrix and run settings; subcommands solve for an
//! equilibrium, then simulate, probe chains, analyze pairs or verify it.

pub mod commands;
pub mod config;
pub mod error;
pub mod state;

pub use commands::{cmd_analyze, cmd_chains, cmd_simulate, cmd_solve, cmd_verify};
pub use config::{load_config, ExperimentConfig};
pub use error::{CliError, Result, EXIT_NOT_CONVERGED};
