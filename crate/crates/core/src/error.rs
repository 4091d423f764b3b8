use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("tensor `{name}`: shape must be non-empty with every extent >= 1, got {shape:?}")]
    InvalidShape { name: String, shape: Vec<usize> },

    #[error("tensor `{name}`: shape {shape:?} holds {expected} values but {actual} were given")]
    LengthMismatch {
        name: String,
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },

    #[error("tensor `{name}`: non-finite value {value} at flat index {index}")]
    NonFinite {
        name: String,
        index: usize,
        value: f64,
    },

    #[error("shape mismatch for `{name}`: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("expected {expected} tensors, got {actual}")]
    CountMismatch { expected: usize, actual: usize },

    #[error("tensor `{name}`: operation needs rank >= {min_rank}, got rank {rank}")]
    RankTooLow {
        name: String,
        rank: usize,
        min_rank: usize,
    },

    #[error("step {t} outside the valid range [1, {max}]")]
    StepOutOfRange { t: u64, max: u64 },

    #[error("invalid hyperparameter `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("class index {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }
}
