//! Library side of the `dbvar` experiment harness: config schemas, the
//! named experiments, run manifests, and the acceptance-verification suite.

pub mod acceptance;
pub mod config;
pub mod experiments;
pub mod manifest;

/// Errors split by exit-code class: config problems exit 2, everything
/// else exits 1.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Run(#[from] anyhow::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
