use alloc::string::String;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("value out of supported range: {0}")]
    Range(String),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not Hurwitz (max real eigenvalue {0})")]
    NotHurwitz(f64),
    #[error("singular linear system")]
    Singular,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("trajectory diverged at t = {t} (norm {norm:e})")]
    Divergence { t: f64, norm: f64 },
    #[error("Carleman dimension {dim} exceeds cap {cap}")]
    SizeCap { dim: usize, cap: usize },
    #[error("segment too long: tau*Lambda = {0} exceeds ln 2, split required")]
    SegmentTooLong(f64),
    #[error("regime violation: {0}")]
    Regime(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn dim(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
