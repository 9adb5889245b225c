use std::fmt::Display;
use std::path::{Path, PathBuf};

/// Front-end error. Each variant maps to one process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{context}: {message}")]
    Data { context: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 1,
            Error::Data { .. } => 2,
            Error::Io { .. } => 3,
        }
    }

    pub fn data(context: impl Display, message: impl Display) -> Self {
        Error::Data {
            context: context.to_string(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn usage(message: impl Display) -> Self {
        Error::Usage(message.to_string())
    }
}
