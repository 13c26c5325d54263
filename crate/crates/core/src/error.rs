use thiserror::Error;

/// Errors produced anywhere in the re-ranking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A loss or gradient went non-finite during optimization.
    #[error("numeric failure in `{param}`: {detail}")]
    Numeric { param: String, detail: String },

    #[error("config `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    /// Adds the file name to I/O and parse errors.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            Error::Io(e) => Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))),
            Error::Parse { line, message } => Error::Parse {
                line,
                message: format!("{message} (in {})", path.display()),
            },
            other => other,
        }
    }
}

/// Reads a whole text file; the error names the file.
pub(crate) fn read_text(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))
}
