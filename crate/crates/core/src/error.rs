use thiserror::Error;

/// Errors raised by the bifurcation search pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in component {component} of {context}")]
    NonFinite { component: usize, context: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("state component {component} = {value} outside the admissible interval [{lo}, {hi}]")]
    OutOfDomain {
        component: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("Newton iteration failed after {iterations} iterations (residual {residual:e})")]
    NewtonFailure {
        last_iterate: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("selected eigenvalue is defective (|w^T v| = {overlap:e})")]
    DefectiveEigen { overlap: f64 },

    #[error("Cholesky factorization failed after maximal jitter (condition estimate {condition_estimate:e})")]
    CholeskyFailure { condition_estimate: f64 },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("rank deficiency: achieved rank {achieved}, required {required}")]
    RankDeficient { achieved: usize, required: usize },

    #[error("Newton failed at every candidate location")]
    AllNewtonFailed,

    #[error("Monte Carlo acquisition degenerate: {failures} of {total} realizations failed")]
    McDegenerate { failures: usize, total: usize },

    #[error("I/O error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
