use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its admissible range (alpha, lambda, beta, ...).
    #[error("invalid parameter: {0}")]
    Param(String),
    /// Input data is malformed (dimension mismatch, empty trajectory, ...).
    #[error("invalid data: {0}")]
    Data(String),
    /// An operation was called in a state that does not allow it.
    #[error("usage error: {0}")]
    Usage(String),
    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Posterior inference could not run.
    #[error("inference error: {0}")]
    Inference(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
