//! File formats, run configuration and workflow commands behind the
//! `sscnn` binary.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod cli;

pub use error::{exit_code, CliError};
