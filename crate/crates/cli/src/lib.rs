//! Command-line front end for the spot-checking library: configuration,
//! reports, sweeps and CSV/JSON output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod sweep;

pub use commands::{execute, run, Command, Status};
pub use config::{Overrides, RunConfig};
pub use error::CliError;
