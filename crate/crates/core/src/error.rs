use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Array dimensions or lengths do not line up.
    ShapeMismatch(String),
    /// A precondition on an argument failed.
    InvalidArgument(String),
    /// An on-disk artifact is missing, malformed, or inconsistent.
    Format(String),
    /// A token is not covered by the active alphabet, table, or lexicon.
    UnknownToken(String),
    /// Underlying I/O failure, with the offending path.
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn token(msg: impl Into<String>) -> Self {
        Error::UnknownToken(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Format(msg) => write!(f, "format error: {msg}"),
            Error::UnknownToken(msg) => write!(f, "unknown token: {msg}"),
            Error::Io { path, source } => write!(f, "io error on {path}: {source}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
