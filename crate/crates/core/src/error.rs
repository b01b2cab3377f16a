use thiserror::Error;

/// Errors produced by case handling, solvers and the simulation runners.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid case: {0}")]
    Semantic(String),

    #[error(
        "power flow did not converge after {iterations} iterations (mismatch {mismatch:.3e} pu)"
    )]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("predictor-corrector exceeded {0} rounds")]
    RoundCapExceeded(usize),

    #[error("mismatched runs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
