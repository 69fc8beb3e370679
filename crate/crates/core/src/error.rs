use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters or configuration values.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Inputs that violate a data contract (shapes, labels, counts).
    #[error("invalid data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// LLM, retrieval or embedding service failures.
    #[error("external service: {0}")]
    Service(String),

    /// A service answered, but the answer could not be parsed.
    #[error("malformed service response: {0}")]
    MalformedResponse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io { .. } | Error::Parse { .. } => 3,
            Error::Service(_) | Error::MalformedResponse(_) => 4,
        }
    }
}
