use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("range error: {0}")]
    Range(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("control value {value:?} lies outside the control box")]
    OutsideControlSet { value: Vec<f64> },
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("time {t} exceeds control duration {duration}")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector is not of unit length (norm {0})")]
    NotUnit(f64),
    #[error("singular matrix (|det| = {0:e})")]
    Singular(f64),
    #[error("grid mismatch: {0} vs {1} angles")]
    GridMismatch(usize, usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("blow-up: {0}")]
    BlowUp(String),
    #[error("degenerate result: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
