use thiserror::Error;

/// Failures raised by the toolkit.
///
/// `Usage` covers every contract violation on the caller's side (bad shapes,
/// indefinite matrices, out-of-range times). `Numeric` is reserved for
/// computations that left the finite floating-point range.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("numeric failure: {what} (input {input:?})")]
    NonFinite { what: String, input: Vec<f64> },

    #[error("numeric failure: state blew up at step {step}{}", path.map(|p| format!(" of path {p}")).unwrap_or_default())]
    BlowUp { step: usize, path: Option<usize> },
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for the numeric variants.
    pub fn is_numeric(&self) -> bool {
        !matches!(self, Error::Usage(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
