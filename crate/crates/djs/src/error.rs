use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] djs_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown configuration key '{key}'; valid keys: {}", valid.join(", "))]
    UnknownKey { key: String, valid: Vec<String> },

    #[error("{operation} failed at layer {layer} (seed {seed}): {reason}")]
    Linalg {
        operation: &'static str,
        layer: usize,
        seed: u64,
        reason: String,
    },

    #[error("non-finite activation at layer {layer} (seed {seed})")]
    NonFiniteActivation { layer: usize, seed: u64 },
}

impl Error {
    /// Process exit code: 2 for configuration errors, 3 for numerical ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::UnknownKey { .. }
            | Error::Parse { .. }
            | Error::Json { .. }
            | Error::Io { .. } => 2,
            Error::Core(e) if is_config_error(e) => 2,
            _ => 3,
        }
    }

    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) if is_config_error(e) => "config",
            Error::Core(_) => "numerical",
            Error::Io { .. } => "io",
            Error::Json { .. } | Error::Parse { .. } => "parse",
            Error::Config(_) => "config",
            Error::UnknownKey { .. } => "unknown-key",
            Error::Linalg { .. } | Error::NonFiniteActivation { .. } => "numerical",
        }
    }
}

fn is_config_error(e: &djs_core::Error) -> bool {
    matches!(
        e,
        djs_core::Error::InvalidConfig(_)
            | djs_core::Error::UnknownActivation(_)
            | djs_core::Error::InvalidParameter { .. }
    )
}

pub type Result<T> = std::result::Result<T, Error>;
