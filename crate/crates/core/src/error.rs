use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("tensor with {entries} entries exceeds the dense capacity of {cap}")]
    Capacity { entries: usize, cap: usize },

    #[error(
        "tolerance {tol:e} unreachable with max rank {max_rank} (relative error {achieved:e})"
    )]
    ToleranceUnreachable {
        tol: f64,
        max_rank: usize,
        achieved: f64,
    },

    #[error("orthogonality precondition violated: {0}")]
    Orthogonality(String),

    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("cannot parse space descriptor {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error("coefficient tensor is not homogeneous of degree {degree}: off-degree magnitude {magnitude:e}")]
    NotHomogeneous { degree: usize, magnitude: f64 },

    #[error("block sparsity violated at core {core}: entry {entry:?} = {value:e}")]
    SparsityViolation {
        core: usize,
        entry: (usize, usize, usize),
        value: f64,
    },

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error("invalid sample set: {0}")]
    InvalidSamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
