use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive semidefinite (pivot {pivot:e} at index {index})")]
    NotPsd { index: usize, pivot: f64 },
    #[error("matrix is not symmetric (|a_ij - a_ji| = {0:e})")]
    NotSymmetric(f64),
    #[error("diagonal entry {index} is {value}, expected 1")]
    NotCorrelation { index: usize, value: f64 },
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite entry in matrix")]
    NonFinite,
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("rank {0} is too small; need r >= 2")]
    RankTooSmall(usize),
    #[error("variance {sigma2} below the admissible threshold {threshold} for rank {r}")]
    BadVariance { r: usize, sigma2: f64, threshold: f64 },
    #[error("slice with |x| = {norm}, s = {radius} is empty")]
    InfeasibleSlice { norm: f64, radius: f64 },
    #[error("degenerate projection: could not draw a direction orthogonal to x")]
    DegenerateProjection,
    #[error("column norm {0} exceeds 1")]
    NormTooLarge(f64),
    #[error("vector {index} has norm {norm}, expected 1")]
    NotUnit { index: usize, norm: f64 },
    #[error("correlation stream is inconsistent at round {0}")]
    Inconsistent(usize),
    #[error("instance with n = {0} columns is too large for brute force (max 26)")]
    TooLarge(usize),
    #[error("block lengths violate the triangle inequality")]
    Infeasible,
    #[error("n = {0} must satisfy n = 2 mod 4 and n >= 6")]
    BadN(usize),
    #[error("bad instance spec: {0}")]
    BadSpec(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
