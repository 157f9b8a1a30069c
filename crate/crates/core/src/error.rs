use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// Each variant maps to a fixed process exit code (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// Process exit code: 2 validation/usage, 3 format, 4 numeric, 1 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::Parameter(_) | Error::Validation(_) => 2,
            Error::Format { .. } => 3,
            Error::Numeric(_) => 4,
            Error::Io { .. } => 1,
        }
    }
}
