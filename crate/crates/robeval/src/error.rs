use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{}: no records", path.display())]
    Empty { path: PathBuf },
    /// The file parsed but its contents break a data-model rule.
    #[error("{}: {source}", path.display())]
    Invalid {
        path: PathBuf,
        #[source]
        source: robeval_core::Error,
    },
    #[error(transparent)]
    Core(#[from] robeval_core::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("auth token variable {0} is not set")]
    MissingAuth(String),
    /// The request failed for good; `status` is the last HTTP status seen, if any.
    #[error("request failed after {attempts} attempt(s): {message}")]
    Http { attempts: u32, status: Option<u16>, message: String },
    #[error("malformed response: {0}")]
    Response(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
