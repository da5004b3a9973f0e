use thiserror::Error;

/// Everything that can go wrong across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("point {0} is not a valid coordinate of the template")]
    InvalidPoint(String),
    #[error("time parameter {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid curve: {0}")]
    InvalidCurve(String),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("exponent {0} outside its domain ({1})")]
    ExponentDomain(f64, &'static str),
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("marginals of consecutive legs disagree at leg {leg}: discrepancy {discrepancy:e}")]
    MarginalMismatch { leg: usize, discrepancy: f64 },
    #[error("all mass was discarded: {0}")]
    ZeroMass(String),
    #[error("empty test family")]
    EmptyTestFamily,
    #[error("index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("endpoint {0} is not a point of the space")]
    OffSpaceEndpoint(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("transport solver failed: {0}")]
    Solver(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Malformed(e.to_string())
    }
}
