use crate::train::EpochLog;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an API contract (shape mismatch, out-of-range index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Invalid construction parameters (bad distribution, bad config, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Training produced a non-finite loss and was aborted.
    ///
    /// The log covers every epoch completed before the abort.
    #[error("training aborted (seed {seed}, epoch {epoch}): {detail}")]
    TrainAbort {
        seed: u64,
        epoch: usize,
        detail: String,
        partial_log: Box<EpochLog>,
    },

    /// The requested quantity is not defined for these inputs
    /// (e.g. Bayes risk of a non-mixture distribution).
    #[error("not available: {0}")]
    NotAvailable(String),

    /// A statistic is undefined on this input (e.g. correlation of a constant vector).
    #[error("undefined: {0}")]
    Undefined(String),

    /// A formula was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    /// A persisted file does not match the documented schema.
    #[error("malformed file {path}: {detail}")]
    Malformed { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
