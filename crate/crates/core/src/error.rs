use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge on {context}: estimated error {residual:.3e}")]
    Quadrature { context: String, residual: f64 },

    #[error("domain violation at {stage}: law is not in I_log^{order} (log-moment of order {order} is infinite)")]
    Domain { stage: String, order: u32 },

    #[error("h not representable on (1,3): distribution likely not in L_infinity (residual {residual:.3e})")]
    NotRepresentable { residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LevyError>;

impl LevyError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LevyError::InvalidParameter(msg.into())
    }

    /// True for errors caused by malformed input rather than by the mathematics.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, LevyError::Parse(_) | LevyError::Io(_))
    }
}

impl From<serde_json::Error> for LevyError {
    fn from(e: serde_json::Error) -> Self {
        LevyError::Parse(e.to_string())
    }
}

impl From<std::io::Error> for LevyError {
    fn from(e: std::io::Error) -> Self {
        LevyError::Io(e.to_string())
    }
}
