use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid popularity vector: {0}")]
    InvalidPopularity(String),

    #[error("uncertainty set is empty: lower bounds sum to {lower_sum}, upper bounds sum to {upper_sum}")]
    InfeasibleSet { lower_sum: f64, upper_sum: f64 },

    #[error("no observed requests in any slot")]
    NoObservations,

    #[error("caching probability T[{tier}][{file}] = {value} is outside [0, 1]")]
    BoxViolation { tier: usize, file: usize, value: f64 },

    #[error("tier {tier} caching probabilities sum to {sum}, expected {expected}")]
    RowSumViolation { tier: usize, sum: f64, expected: f64 },

    #[error("marginals cannot be realized by a combination distribution: {0}")]
    InfeasibleMarginals(String),

    #[error("file {file} is not stored in any tier")]
    FileNotStored { file: usize },

    #[error("no multiplier bracket found for tier {tier}")]
    BracketFailure { tier: usize },

    #[error("geometric program solver failed: {0}")]
    SolverFailure(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;
