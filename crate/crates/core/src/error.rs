use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("path delay {delay:.3e} s is not below the cyclic-prefix span {limit:.3e} s")]
    DelayOutOfRange { delay: f64, limit: f64 },

    #[error("beam index {index} outside 1..={count}")]
    BeamOutOfRange { index: usize, count: usize },

    #[error("empty codebook")]
    EmptyCodebook,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid box: ({0}, {1}, {2}, {3})")]
    InvalidBox(f64, f64, f64, f64),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("malformed record at {path}:{line}: {msg}")]
    Record { path: String, line: usize, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::NonFiniteLoss { .. } => 3,
            Error::InvalidParameter(_) | Error::Config(_) => 1,
            _ => 2,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
