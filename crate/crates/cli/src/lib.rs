//! Config-driven experiment runner: validation, theorem-check runs with CSV
//! and JSON artifacts, and generators for reusable input files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

pub use commands::{gen, run, validate, GenKind, GenOutput, RunReport, RunSettings, ValidationSummary};
pub use config::{Experiment, ExperimentConfig};

/// Exit status for a malformed config or command line.
pub const EXIT_USAGE: u8 = 2;

/// A problem with the config, located by field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "field `{}`: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error in {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] erglab_core::Error),
}

/// Worker cap from `ERGLAB_THREADS`; `None` when unset.
pub fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("ERGLAB_THREADS") {
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(CliError::Usage(format!("ERGLAB_THREADS: {e}"))),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(CliError::Usage(format!("ERGLAB_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}
