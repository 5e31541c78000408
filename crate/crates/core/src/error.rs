use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the library. Per-record problems that the pipeline is
/// expected to survive (bad UTF-8 lines, failed translations) are tallied in
/// diagnostics instead and never show up here.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line count mismatch: source has {source_lines} lines, target has {target_lines} lines")]
    LineCountMismatch {
        source_lines: usize,
        target_lines: usize,
    },

    #[error("failed to serialize record {id}: {source}")]
    Serialize {
        id: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("malformed JSON at {path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported language {lang:?}; supported: {supported}")]
    UnsupportedLanguage { lang: String, supported: String },

    #[error("invalid lexicon for {lang}: {reason}")]
    Lexicon { lang: String, reason: String },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("training diverged at epoch {epoch}: objective is {objective} (learning rate too high?)")]
    Diverged { epoch: usize, objective: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed data at {location}: {reason}")]
    Format { location: String, reason: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("backend error: {0}")]
    Backend(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
