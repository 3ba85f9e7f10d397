use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("overflow in {format}: magnitude {magnitude:e} exceeds x_max = {x_max:e}")]
    Overflow {
        format: &'static str,
        magnitude: f64,
        x_max: f64,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("matrix is not positive semidefinite: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e}")]
    NotPsd { lambda_min: f64, lambda_max: f64 },

    #[error("Cholesky factorization failed at pivot {pivot} (value {value:e})")]
    Cholesky { pivot: usize, value: f64 },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("theory out of range: c*n*u_p = {n_up:e} >= 1")]
    TheoryOutOfRange { n_up: f64 },

    #[error("singular preconditioner: lambda_k_hat + mu = {0:e}")]
    SingularPreconditioner(f64),

    #[error("operator is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("PCG breakdown at iteration {iteration}: {reason}")]
    Breakdown { iteration: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numeric(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
