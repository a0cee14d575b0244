//! Error type shared across the crate.
//!
//! Configuration problems (bad field values, malformed files, schema
//! violations) are kept distinct from numerical failures (singular systems,
//! non-convergent quadrature or fits) so callers can map them to different
//! exit codes.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or malformed config file.
    #[error("config error: {0}")]
    Config(String),

    /// Mismatched matrix/vector dimensions in a user-supplied input.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Input CSV violated the expected schema.
    #[error("schema error at row {row}, column {column}: {message}")]
    Schema {
        row: usize,
        column: String,
        message: String,
    },

    /// A linear system was singular beyond the jitter tolerance.
    #[error("singular system: {0}")]
    SingularSystem(String),

    /// An argument was outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative routine (quadrature, root finding, least squares)
    /// failed to converge to the requested tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that indicate a bad input rather than a numerical
    /// breakdown; the CLI maps these to exit code 2 and the rest to 3.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Dimension(_) | Error::Schema { .. }
        )
    }
}
