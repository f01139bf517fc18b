//! Error types shared across the library.

use thiserror::Error;

/// Errors raised by the numeric kernels and the threshold algebra.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum MathError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("index {index} out of range for vocabulary of size {vocab}")]
    IndexOutOfRange { index: usize, vocab: usize },
    #[error("degenerate ratio bound: {0}")]
    DegenerateBound(String),
    #[error("non-finite evaluation at coordinate {coord}")]
    NonFinite { coord: usize },
}

pub type MathResult<T> = Result<T, MathError>;
