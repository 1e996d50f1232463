use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows} rows, row {bad} has {len} entries")]
    NotSquare { rows: usize, bad: usize, len: usize },
    #[error("matrix is not elliptic (lambda = {0:e})")]
    NotElliptic(f64),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("cell index {index} out of range for {len} cells")]
    OutOfRange { index: usize, len: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("point lies on the singular set (distance {0:e})")]
    SingularSet(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("factorization failed: zero pivot at row {0}")]
    Factorization(usize),
    #[error("time step too large for Crank-Nicolson (dt*|L| = {0:e})")]
    StiffStep(f64),
    #[error("class precondition failed: {0}")]
    Precondition(String),
    #[error("tail not converged: estimated tail {0:e}")]
    Tail(f64),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
