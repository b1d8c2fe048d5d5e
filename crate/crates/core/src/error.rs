use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("distinct points {0} and {1} are at distance zero")]
    ZeroOffDiagonal(usize, usize),
    #[error("distance matrix is not symmetric at ({0}, {1})")]
    AsymmetricDistance(usize, usize),
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid exponent: {0}")]
    InvalidExponent(String),
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
    #[error("invalid phi: {0}")]
    InvalidPhi(String),
    #[error("exponent out of range: {0}")]
    ExponentOutOfRange(String),
    #[error("Hölder split mismatch: {0}")]
    SplitMismatch(String),
    #[error("alpha must lie in (0, 1), got {0}")]
    AlphaOutOfRange(f64),
    #[error("operation needs an interval grid")]
    NotAGrid,
    #[error("search budget must be positive")]
    BudgetZero,
    #[error("maximal norm certificate too small: {0}")]
    NupTooSmall(String),
    #[error("exponent scaling mismatch: {0}")]
    ScalingMismatch(String),
    #[error("q0 out of range: {0}")]
    Q0OutOfRange(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("weight outside the required class: {0}")]
    ClassViolation(String),
    #[error("invalid structural input: {0}")]
    InvalidStructural(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

pub type Result<T> = std::result::Result<T, Error>;
