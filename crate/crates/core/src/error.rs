use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed PCD content. `location` is `line N` for header/ASCII data
    /// and `byte offset N` for binary payloads.
    #[error("pcd {location}: {message}")]
    Pcd { location: String, message: String },

    #[error("trajectory line {line}: {message}")]
    TrajectoryFormat { line: usize, message: String },

    #[error("ndt map file: {0}")]
    MapFormat(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty NDT map")]
    EmptyMap,

    #[error("empty scan")]
    EmptyScan,

    #[error("no temporal overlap")]
    NoOverlap,

    #[error("insufficient pairs: need at least {needed}, got {got}")]
    InsufficientPairs { needed: usize, got: usize },

    #[error("degenerate point set: {0}")]
    Degenerate(String),

    #[error("missing attribute `{0}`")]
    MissingAttribute(&'static str),

    #[error("session data: {0}")]
    Session(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
