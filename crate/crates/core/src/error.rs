use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{measure} is undefined at breakpoint {breakpoint}, which carries positive weight")]
    UndefinedEffect {
        measure: &'static str,
        breakpoint: usize,
    },

    #[error("weight vector is identically zero")]
    ZeroWeights,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("scenario file: {0}")]
    ScenarioFile(String),
}

pub type Result<T> = std::result::Result<T, Error>;
