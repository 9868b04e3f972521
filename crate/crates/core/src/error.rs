use std::path::PathBuf;

/// Errors produced by the localization library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate face")]
    DegenerateFace,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("euler singular")]
    EulerSingular,
    #[error("projection singular")]
    ProjectionSingular,
    #[error("no wireframe points")]
    NoWireframePoints,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("map too small: {width}x{height}, need at least 2x2")]
    MapTooSmall { width: usize, height: usize },
    #[error("empty error list")]
    EmptyErrors,
    #[error("all points skipped")]
    AllPointsSkipped,
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("query {name}: {source}")]
    Query {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// Innermost error, looking through query context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Query { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
