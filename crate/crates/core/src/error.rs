use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes that cannot be combined, or odd spatial extents handed to the DWT.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// NaN or infinite values where finite ones are required.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    /// Inputs that are individually valid but violate a multi-step protocol,
    /// e.g. misaligned trajectories.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// An objective produced a non-finite value or could not be evaluated.
    #[error("evaluation error at w = {w}: {message}")]
    Evaluation { w: f64, message: String },

    #[error("config error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("tensor file error: {0}")]
    Format(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
