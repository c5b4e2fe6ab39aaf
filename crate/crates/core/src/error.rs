use thiserror::Error;

use crate::input::FamilyKind;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter for {family:?}: {detail}")]
    InvalidParameter { family: FamilyKind, detail: String },

    #[error("unknown input stream {0}")]
    UnknownStream(usize),

    #[error("design index {index} out of range (K = {count})")]
    UnknownDesign { index: usize, count: usize },

    #[error("{outputs} outputs but {scores} score vectors")]
    LengthMismatch { outputs: usize, scores: usize },

    #[error("scenario shape mismatch: {0}")]
    ScenarioShape(String),

    #[error("estimator not initialized: {0}")]
    Uninitialized(String),

    #[error("rate for component {0} must be positive")]
    NonpositiveRate(usize),

    #[error("design {0} is the current best; its gap quantities are undefined")]
    BestDesign(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}
