use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate video_id `{0}`")]
    DuplicateVideo(String),

    #[error("record `{video_id}`: {message}")]
    InvalidRecord { video_id: String, message: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("memory budget exceeded: {stored} frames stored, capacity {capacity}")]
    BudgetExceeded { stored: usize, capacity: usize },

    #[error("run `{0}` already exists (use --force to overwrite)")]
    RunExists(String),

    #[error("corrupt artifact {path}: {message}")]
    Corrupt { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn record(video_id: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidRecord {
            video_id: video_id.into(),
            message: message.into(),
        }
    }

    /// Process exit code for the command-line front end: 2 for configuration
    /// problems, 3 for data problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::RunExists(_) => 2,
            _ => 3,
        }
    }
}
