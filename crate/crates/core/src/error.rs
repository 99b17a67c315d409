use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unsupported format_version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("bad magic in index file: expected \"BSDX\"")]
    BadMagic,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("graph has no vertices")]
    EmptyGraph,

    #[error("vertex {index} out of range for graph with {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },

    #[error("insufficient pool: need {needed}, have {available}")]
    InsufficientPool { needed: usize, available: usize },

    #[error("missing graph for function {0}")]
    MissingGraph(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
