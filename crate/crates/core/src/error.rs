use thiserror::Error;

/// Errors produced by the decomposition library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mode {0}: modes are 0, 1 or 2")]
    InvalidMode(usize),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular value decomposition failed to converge")]
    SvdFailed,

    #[error("matrix has {cols} columns; exhaustive Kruskal rank is limited to {limit}")]
    TooManyColumns { cols: usize, limit: usize },

    #[error("linear system is singular even after damping")]
    SingularSystem,

    #[error("requested cardinality {requested} exceeds the {rows}x{cols} score matrix")]
    CardinalityTooLarge {
        requested: usize,
        rows: usize,
        cols: usize,
    },

    #[error("matrix {0} is not left-invertible (rank deficient columns)")]
    NotLeftInvertible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::DimensionMismatch(msg.into()))
}
