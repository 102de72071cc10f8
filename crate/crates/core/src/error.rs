use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record: {0}")]
    Malformed(String),

    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("dangling reference: {kind} `{id}` refers to missing {target}")]
    Dangling {
        kind: &'static str,
        id: String,
        target: String,
    },

    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("unknown {kind}: {id}")]
    Unknown { kind: &'static str, id: String },

    #[error("insufficient questions: topic `{topic}` has {available}, turn length {requested}")]
    InsufficientQuestions {
        topic: String,
        available: usize,
        requested: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    Dimension {
        expected: usize,
        actual: usize,
        context: Option<String>,
    },

    #[error("mismatch: {0}")]
    Mismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the input data rather than by the computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Malformed(_)
                | Error::MalformedLine { .. }
                | Error::Dangling { .. }
                | Error::Duplicate { .. }
                | Error::Unknown { .. }
                | Error::InsufficientQuestions { .. }
                | Error::Mismatch(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
