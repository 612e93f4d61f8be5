use thiserror::Error;

/// Errors raised by the identification library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SysIdError {
    /// Invalid or inconsistent configuration (noise scales, counts, cluster ids).
    #[error("configuration error: {0}")]
    Config(String),
    /// Two operands whose shapes must agree do not.
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    /// A matrix that must be positive definite (or a separation that must be
    /// positive) is numerically degenerate.
    #[error("degenerate problem: {0}")]
    Degenerate(String),
}

impl SysIdError {
    pub(crate) fn shape(
        context: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    ) -> Self {
        SysIdError::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            actual: format!("{}x{}", actual.0, actual.1),
        }
    }
}

pub type Result<T> = std::result::Result<T, SysIdError>;
