//! Scenario-driven front end for `tdem-core`.
//!
//! Each command loads one JSON config, computes everything in memory, then writes its
//! outputs and a `manifest.json` with SHA-256 hashes in one pass.

// `!(x <= tol)` is used deliberately so that NaN fails every check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{run, Command};
pub use config::{Scenario, ScenarioConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(#[source] tdem_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<tdem_core::Error> for CliError {
    fn from(e: tdem_core::Error) -> Self {
        match e {
            tdem_core::Error::InvalidArgument { name, reason } => {
                CliError::Config { field: name.to_string(), message: reason }
            }
            other => CliError::Numerical(other),
        }
    }
}
