//! Experiment driver for `fhn-waves`: JSON-configured scenarios that write CSV
//! and JSON artifacts plus a manifest.

pub mod compare;
pub mod config;
pub mod output;
pub mod scenarios;

use thiserror::Error;

/// Environment variable naming the directory under which run directories are created.
pub const OUTPUT_ROOT_ENV: &str = "FHN_WAVES_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("scenario failed: {0}")]
    Scenario(#[from] fhn_waves::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Scenario(_) | CliError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Scenario(_) => "scenario",
            CliError::Io(_) => "io",
        }
    }

    /// Machine-readable error record.
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() })
    }
}
