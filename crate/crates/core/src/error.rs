use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value or label outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Invalid configuration or hyperparameters.
    #[error("config error: {0}")]
    Config(String),
    /// Data that violates an ordering or shape invariant.
    #[error("integrity error: {0}")]
    Integrity(String),
    /// A stratified split could not be formed.
    #[error("stratification error: {0}")]
    Stratification(String),
    /// Caller violated an input contract (dimension, length).
    #[error("contract error: {0}")]
    Contract(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
