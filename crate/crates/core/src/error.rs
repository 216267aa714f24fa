use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("duplicate token {token:?} at line {line}")]
    DuplicateToken { token: String, line: usize },

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenOutOfRange { id: u32, size: usize },

    #[error("vocabulary is missing the reserved token {0:?}")]
    MissingReserved(&'static str),

    #[error("NaN encountered in log-domain input")]
    NanInput,

    #[error("no finite value to normalize")]
    NoFiniteValue,

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("class tags without a definition: {}", .0.join(", "))]
    UndefinedClasses(Vec<String>),

    #[error("invalid class definition: {0}")]
    InvalidClass(String),

    #[error("transition does not apply to state: {0}")]
    TransitionMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
