use std::path::PathBuf;

use crate::seqmdp::Token;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("cannot step from a terminal state")]
    TerminalStep,
    #[error("token {token} out of range for vocabulary of size {size}")]
    TokenOutOfRange { token: Token, size: usize },
    #[error("model parameters contain non-finite values")]
    NonFiniteParameters,
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("tabular teacher has no entry for context {0:?}")]
    MissingContext(Vec<Token>),
    #[error("next state is not the successor of (state, action)")]
    TransitionMismatch,
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("corpus sequence {index} is invalid: {reason}")]
    InvalidSequence { index: usize, reason: String },
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("trajectory {index} has length {len}, step {step} requested")]
    StepOutOfRange { index: usize, len: usize, step: usize },
    #[error("enumeration too large: {0}")]
    SizeBoundExceeded(String),
    #[error("non-finite gradient at iteration {iteration} from trajectory {trajectory}")]
    NonFiniteGradient { iteration: usize, trajectory: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
