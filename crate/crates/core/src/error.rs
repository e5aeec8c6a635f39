//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("drift matrix not Hurwitz: {0}")]
    UnstableSystem(String),

    #[error("trajectory diverged: {0}")]
    DivergedTrajectory(String),

    #[error("iteration limit exceeded: {0}")]
    NoConvergence(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid task: {0}")]
    InvalidTask(String),

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("sample budget exceeded: {0}")]
    MaxSamplesExceeded(String),
}

pub type Result<T> = std::result::Result<T, Error>;
