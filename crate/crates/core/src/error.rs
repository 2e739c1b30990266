use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node {index} out of range (mesh has {len} vertices)")]
    InvalidNode { index: usize, len: usize },

    #[error("weight y^{alpha} is not integrable at the origin (alpha must exceed -1)")]
    NonIntegrableWeight { alpha: f64 },

    #[error("conjugate gradients stopped after {iterations} iterations at relative residual {residual:.3e}")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("local matrix is not positive definite (pivot {pivot} = {value:.3e})")]
    SingularLocalMatrix { pivot: usize, value: f64 },

    #[error("optimizer reached {iterations} iterations with projected gradient {pg_norm:.3e} (tolerance {tol:.1e})")]
    OptimizerStalled {
        iterations: usize,
        pg_norm: f64,
        tol: f64,
    },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
