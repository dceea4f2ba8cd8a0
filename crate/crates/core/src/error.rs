use thiserror::Error;

/// Errors raised by the counting, persistence and smoothing pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the domain of definition: {0}")]
    Domain(String),

    #[error("operation not supported for this descriptor: {0}")]
    Unsupported(String),

    #[error("invalid filtered complex: {0}")]
    InvalidComplex(String),

    #[error("s = {s} lies in the action spectrum (colliding action {action})")]
    SpectralValue { s: f64, action: f64 },

    #[error("descriptor has no admissible extension beyond the closed simplex: {0}")]
    ExtensionUnavailable(String),

    #[error("mollification margin exceeded: {0}")]
    Margin(String),

    #[error("smoothing failure: {0}")]
    SmoothingFailure(String),

    #[error("inconsistent mollified surface: {0}")]
    InconsistentSurface(String),

    #[error("no regular perturbation found within budget; worst direction {direction:?} (smallest singular value {sigma:.3e})")]
    NoRegularPerturbation { direction: Vec<i64>, sigma: f64 },

    #[error("polytope is not Delzant: {0}")]
    NotDelzant(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o or format error: {0}")]
    Format(String),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SpectralValue { .. }
                | Error::Margin(_)
                | Error::SmoothingFailure(_)
                | Error::InconsistentSurface(_)
                | Error::NoRegularPerturbation { .. }
                | Error::InsufficientData(_)
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
