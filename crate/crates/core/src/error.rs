use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not symmetric positive definite: pivot {index} is {pivot}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("column {0} of the mixing matrix is zero")]
    ZeroColumn(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("input out of range for inverse: coordinate {index} = {value}")]
    OutOfRange { index: usize, value: f64 },
    #[error("inverse is not available for model kind {0}")]
    NotInvertible(String),
    #[error("non-finite loss at iteration {iteration}")]
    NonFiniteLoss { iteration: usize },
    #[error("SNR is undefined for a zero noiseless measurement")]
    UndefinedSnr,
    #[error("serialization: {0}")]
    Serialization(String),
}

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
