use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid instance parameters: {0}")]
    InvalidParams(String),

    /// A request violates the f̄ / b̄ / κ bounds (or is not finite). `index` is 1-based.
    #[error("request {index} violates bounds: {reason}")]
    BoundViolation { index: usize, reason: String },

    #[error("expected {expected} requests, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("trace is not in general position: requests {first} and {second} share bang-per-buck ratio {ratio}")]
    DegenerateTrace { first: usize, second: usize, ratio: f64 },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("distribution for period {period} has empty support")]
    EmptySupport { period: usize },

    #[error("distribution for period {period} has invalid probability {prob}")]
    NegativeProbability { period: usize, prob: f64 },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("no exact Wasserstein routine for {0}")]
    UnsupportedFamilyPair(String),

    #[error("perturbation scale must be positive, got {0}")]
    InvalidPerturbation(f64),

    #[error("perturbation failed to reach general position after {attempts} attempts")]
    PerturbationFailed { attempts: usize },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
