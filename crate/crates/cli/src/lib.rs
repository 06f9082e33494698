//! Command-line driver for two-emitter correlation trilateration.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::{cmd_fit, cmd_forward, cmd_map, cmd_sweep, cmd_trials, execute, Outcome};
pub use config::{Command, RunConfig};
pub use error::CliError;
