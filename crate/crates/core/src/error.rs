//! Error type shared by every module of the crate.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),

    #[error("monotonicity/convexity not attained below x = 1e6: {0}")]
    MonotonicityUnattainable(String),

    #[error("argument outside the domain: {0}")]
    DomainError(String),

    #[error("root finding did not converge: {0}")]
    NoConvergence(String),

    #[error("sieve limit {0} exceeds the supported maximum")]
    LimitTooLarge(u64),

    #[error("floor decision unresolved even in extended precision: {0}")]
    PrecisionExhausted(String),

    #[error("membership criteria disagree at p = {p} (direct: {direct}, floor criterion: {criterion})")]
    CriterionDisagreement { p: u64, direct: bool, criterion: bool },

    #[error("requested {requested} exceeds the enumerated or sieved limit {limit}")]
    LimitMismatch { requested: u64, limit: u64 },

    #[error("range beyond the prime table: needed {needed}, table covers {limit}")]
    RangeBeyondTable { needed: u64, limit: u64 },

    #[error("Vaughan decomposition outside its valid regime: {0}")]
    RegimeViolation(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("empty set: {0}")]
    EmptySet(String),

    #[error("at least 4 checkpoints are required, got {0}")]
    TooFewCheckpoints(usize),

    #[error("invalid break sequence: {0}")]
    InvalidBreaks(String),

    #[error("spectral and direct counts disagree: {0}")]
    SpectralMismatch(String),

    #[error("singular-series cutoff {0} is too small")]
    CutoffTooSmall(u64),

    #[error("quadrature grid too coarse: {0}")]
    QuadratureTooCoarse(String),

    #[error("integer overflow: {0}")]
    Overflow(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cache file: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short name of the variant, used in machine-readable diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ParameterOutOfRange(_) => "ParameterOutOfRange",
            Error::MonotonicityUnattainable(_) => "MonotonicityUnattainable",
            Error::DomainError(_) => "DomainError",
            Error::NoConvergence(_) => "NoConvergence",
            Error::LimitTooLarge(_) => "LimitTooLarge",
            Error::PrecisionExhausted(_) => "PrecisionExhausted",
            Error::CriterionDisagreement { .. } => "CriterionDisagreement",
            Error::LimitMismatch { .. } => "LimitMismatch",
            Error::RangeBeyondTable { .. } => "RangeBeyondTable",
            Error::RegimeViolation(_) => "RegimeViolation",
            Error::HypothesisViolated(_) => "HypothesisViolated",
            Error::EmptySet(_) => "EmptySet",
            Error::TooFewCheckpoints(_) => "TooFewCheckpoints",
            Error::InvalidBreaks(_) => "InvalidBreaks",
            Error::SpectralMismatch(_) => "SpectralMismatch",
            Error::CutoffTooSmall(_) => "CutoffTooSmall",
            Error::QuadratureTooCoarse(_) => "QuadratureTooCoarse",
            Error::Overflow(_) => "Overflow",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::CacheFormat(_) => "CacheFormat",
            Error::Io(_) => "Io",
        }
    }
}
