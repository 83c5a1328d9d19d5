use thiserror::Error;

/// Errors produced by the library.
///
/// Configuration and data-shape problems are distinguished from numerical
/// failures so the CLI can map them to different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A function argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution or model parameter violates its invariants.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Input data fails a structural requirement (shapes, duplicates, schema).
    #[error("invalid data: {0}")]
    Data(String),

    /// A run configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// A symmetric matrix turned out not to be positive definite.
    #[error("factorization failed at pivot {index}: value {value:.3e}")]
    Factorization { index: usize, value: f64 },

    /// A numerical procedure produced non-finite or otherwise unusable values.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by user input rather than numerics.
    pub fn is_user_error(&self) -> bool {
        matches!(self, Error::Data(_) | Error::Config(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
