use thiserror::Error;

/// Errors raised by the numeric kernels and the testing procedures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("correlation matrix is not positive semidefinite (pivot {pivot:.3e} at row {row})")]
    NotPositiveSemidefinite { row: usize, pivot: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("bracket [{lo}, {hi}] does not straddle target {target}")]
    BadBracket { lo: f64, hi: f64, target: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid weighting scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid correlation model: {0}")]
    InvalidModel(String),

    #[error("invalid test problem: {0}")]
    InvalidProblem(String),

    #[error("method not applicable: {0}")]
    MethodMismatch(String),

    #[error("too many hypotheses: {m} exceeds the limit of {max}")]
    TooManyHypotheses { m: usize, max: usize },

    #[error("invalid simulation scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
