use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid bundle: {0}")]
    InvalidBundle(String),
    #[error("exponent p = {0} must lie in [1, inf]")]
    Exponent(f64),
    #[error("empty family")]
    EmptyFamily,
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("weight |alpha({index:?})| = {value} exceeds declared bound {bound}")]
    WeightBound {
        index: Vec<u64>,
        value: f64,
        bound: f64,
    },
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid subsequence: {0}")]
    InvalidSubsequence(String),
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),
    #[error("enumeration budget exceeded: |n| = {size} > {budget}")]
    Budget { size: u128, budget: u128 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
