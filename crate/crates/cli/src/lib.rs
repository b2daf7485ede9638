//! The `fedfair` command line: config loading and the four subcommands.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{cmd_datasheet, cmd_evaluate, cmd_generate, cmd_simulate};
pub use config::PipelineConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(fedfair::Error),
    #[error("{0}")]
    Runtime(fedfair::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl From<fedfair::Error> for CliError {
    fn from(e: fedfair::Error) -> Self {
        if e.is_data_error() {
            CliError::Data(e)
        } else {
            CliError::Runtime(e)
        }
    }
}

impl CliError {
    /// 2 config, 3 data, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) | CliError::Output { .. } => 4,
        }
    }
}

/// Loads the config, applies command-line overrides, validates it and
/// derives component seeds. Nothing is written.
pub fn prepare(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<(PipelineConfig, String), CliError> {
    let (mut cfg, text) = PipelineConfig::load(path)?;
    if let Some(out) = out {
        cfg.output_dir = out.to_path_buf();
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    cfg.derive_seeds();
    Ok((cfg, text))
}
