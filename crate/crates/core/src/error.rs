use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum IsacError {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Two objects that must agree in size do not.
    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    /// An index fell outside the frame.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// The sensing or beamforming constraint cannot be met.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The input carries no usable information (all-zero pilot row, on-grid kernel, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A parameter pattern outside the supported numerical regime.
    #[error("unsupported parameter regime: {0}")]
    Unsupported(String),

    /// Reading or writing an output file failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IsacError {
    fn from(e: std::io::Error) -> Self {
        IsacError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, IsacError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(IsacError::InvalidArgument(msg.into()))
}
