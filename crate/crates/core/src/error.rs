use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {what} at step {step}: expected {expected}, got {got}")]
    StepShape {
        what: &'static str,
        step: usize,
        expected: String,
        got: String,
    },
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: String,
        got: String,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("response is not achievable: residuals ({rho1:.3e}, {rho2:.3e}) exceed {tol:.1e}")]
    NotAchievable { rho1: f64, rho2: f64, tol: f64 },
    #[error("gain is not causal: entry ({row}, {col}) lies above the block diagonal")]
    NotCausal { row: usize, col: usize },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("undetectable attack directions give unbounded regret")]
    UnboundedRegret,
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("rank-one lifting not reached after {iterations} iterations (ratio {ratio:.3e})")]
    NotRankOne { iterations: usize, ratio: f64 },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("dimension {dim} exceeds the limit {limit}")]
    DimensionGuard { dim: usize, limit: usize },
    #[error("signal is not persistently exciting of order {order} (rank {rank} < {needed})")]
    NotPersistentlyExciting {
        order: usize,
        rank: usize,
        needed: usize,
    },
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
