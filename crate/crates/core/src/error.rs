//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: expected a nonnegative integer, got {token:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{0}: file contains no interactions")]
    EmptyFile(PathBuf),

    #[error("test edge ({user}, {item}) duplicates a train edge")]
    TestEdgeInTrain { user: u64, item: u64 },

    #[error("user {0} has no train interactions; popularity preference is undefined")]
    UndefinedPreference(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training aborted at epoch {epoch}: {reason}")]
    TrainingAbort { epoch: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: not a checkpoint file ({reason})")]
    Checkpoint { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for bad inputs, 2 for runtime aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::EmptyFile(_)
            | Error::TestEdgeInTrain { .. }
            | Error::UndefinedPreference(_)
            | Error::InvalidArgument(_)
            | Error::Json { .. }
            | Error::Checkpoint { .. } => 1,
            Error::TrainingAbort { .. } | Error::Io { .. } => 2,
        }
    }
}
