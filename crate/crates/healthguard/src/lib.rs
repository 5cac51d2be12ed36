//! Files, alerting and the command-line front end around `healthguard-core`.

pub mod alert;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod model_io;
pub mod report;

pub use error::{CliError, ConfigError};
