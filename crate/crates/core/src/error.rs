use thiserror::Error;

/// Errors produced by the library.
///
/// `Parse` and `InvalidInput` describe malformed data at the boundary,
/// `Precondition` a violated operation contract, and the remaining variants
/// resource limits.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("derivation search exhausted after {explored} nodes without reaching the target")]
    SearchExhausted { explored: usize },

    #[error("atom budget exceeded: {required} atoms required, budget is {budget}")]
    Budget { required: u128, budget: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
