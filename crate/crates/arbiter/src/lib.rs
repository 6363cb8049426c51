//! Command-line harness, file formats and the live teleoperation service
//! around `arbiter-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod report;
pub mod server;
pub mod session;
pub mod trace;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
