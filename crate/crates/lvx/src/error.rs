use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cell has negative volume {0}")]
    NegativeVolume(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("Picard residual grew for 5 consecutive iterations, reaching {residual:e} at iteration {iterations}")]
    PicardDivergence { iterations: usize, residual: f64, trace: Vec<(usize, f64)> },
    #[error("no contraction: irreducible kernel mass {mass} ≥ 1")]
    NoContraction { mass: f64 },
    #[error("Picard iteration stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
