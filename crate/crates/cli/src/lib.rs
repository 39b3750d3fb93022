//! Batch front end for the obstacle solvers: reads a TOML problem
//! description, runs one command and writes CSV/JSON reports.

pub mod config;
pub mod error;
pub mod expr;
pub mod run;

pub use config::{Command, RunConfig};
pub use error::CliError;
pub use run::{run, RunOptions, RunOutcome};
