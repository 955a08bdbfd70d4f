//! Experiment runner: loads a TOML configuration, runs the solver,
//! simulator and diagnostics, and writes data files with a manifest.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Command, Outcome};
pub use config::{load_config, parse_config, ConfigError, ExperimentConfig};
pub use output::OutputDir;

use std::path::PathBuf;

/// Exit status when every check passed.
pub const EXIT_OK: i32 = 0;
/// The configuration or command line was rejected.
pub const EXIT_INVALID: i32 = 1;
/// The run finished but a PASS flag came out false.
pub const EXIT_CHECK_FAILED: i32 = 2;
/// Anything else: IO failures, numerical breakdowns.
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] invlab_core::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_INVALID,
            CliError::Core(invlab_core::Error::Invalid { .. }) => EXIT_INVALID,
            CliError::Io { .. } | CliError::Core(_) => EXIT_INTERNAL,
        }
    }
}

/// Applies an `INVLAB_SEED` value, decimal or `0x` hexadecimal.
pub fn apply_seed_override(cfg: &mut ExperimentConfig, value: Option<&str>) -> Result<(), CliError> {
    if let Some(v) = value {
        cfg.run.master_seed = config::parse_seed(v)
            .ok_or_else(|| CliError::Usage(format!("INVLAB_SEED = `{v}` is not a 64-bit unsigned integer")))?;
    }
    Ok(())
}
