use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("weight at index {0} is negative")]
    NegativeWeight(usize),
    #[error("weights sum to zero")]
    ZeroTotalMass,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid order p = {0} (must be >= 1)")]
    InvalidP(f64),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("file {0} contains no data")]
    EmptyFile(PathBuf),
    #[error("newton iteration did not converge within {0} steps")]
    NoConvergence(usize),
    #[error("log-density curvature {0} at the mode is not negative")]
    NonNegativeCurvature(f64),
    #[error("point cloud became non-finite at step {step}")]
    NonFiniteState { step: usize, trace: Vec<crate::flows::TracePoint> },
    #[error("point clouds have different sizes: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("problem size {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
