use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("operator composition dimension mismatch: operator {left_index} ({left_rows}x{left_cols}) cannot be applied after operator {right_index} ({right_rows}x{right_cols})")]
    ComposeDims {
        left_index: usize,
        left_rows: usize,
        left_cols: usize,
        right_index: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("transform of length {transform_len} does not match operator dimension {operator_dim}")]
    TransformDims {
        transform_len: usize,
        operator_dim: usize,
    },

    #[error("diagonal operator requires strictly positive entries (entry {index} is {value})")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("right-hand side is zero: nothing to solve")]
    ZeroRhs,

    #[error("signal length {len} is not divisible by 2^{levels}; pad the input to a multiple")]
    IndivisibleLength { len: usize, levels: usize },

    #[error("image side {side} must be a power of two with at least {levels} halvings")]
    InvalidSide { side: usize, levels: usize },

    #[error("coefficient vector length {got} does not match transform length {expected}")]
    CoefficientLength { got: usize, expected: usize },

    #[error("{method} requires a square operator, got {rows}x{cols}")]
    NotSquare {
        method: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("non-finite value in {context} at iteration {iteration}")]
    NonFinite {
        context: &'static str,
        iteration: usize,
    },

    #[error("objective diverged at iteration {iteration}: stepsize likely exceeds 1/sigma_1^2")]
    Diverged { iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed problem directory: {0}")]
    Deserialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;
