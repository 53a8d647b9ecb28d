use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown schedule preset `{0}` (expected ddpm, edm, fm or eqm)")]
    UnknownPreset(String),

    #[error("noise coefficient b(t) is not strictly increasing near t = {t}")]
    NonMonotoneSchedule { t: f64 },

    #[error("sampler coefficients are singular at t = {t} (ad - bc = 0)")]
    SingularSampler { t: f64 },

    #[error("data support is empty")]
    EmptySupport,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ambient dimension equals intrinsic dimension; no codimension")]
    NoCodimension,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
