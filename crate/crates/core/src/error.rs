use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value violates its contract.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A binary artifact could not be decoded.
    #[error("malformed {kind} file at byte {offset}: {reason}")]
    Format {
        kind: &'static str,
        offset: u64,
        reason: String,
    },

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("shadow model {index}: {source}")]
    Model {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 runtime/numerical, 4 I/O (including unreadable artifacts).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid { .. } | Error::Shape(_) => 2,
            Error::Diverged { .. } => 3,
            Error::Format { .. } | Error::Io { .. } => 4,
            Error::Model { source, .. } | Error::Stage { source, .. } => source.exit_code(),
        }
    }
}
