use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("index {index} out of range on line {line} (norb = {norb})")]
    Index { line: usize, index: i64, norb: usize },
    #[error("symmetry mismatch: {0}")]
    Symmetry(String),
    #[error("capacity exceeded: {what} needs {needed}, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
    },
    #[error("two-body matrix is not positive semidefinite (residual diagonal {residual:e})")]
    NotPsd { residual: f64 },
    #[error("internal consistency check failed: {0}")]
    Internal(String),
    #[error("trial overlap {0:e} too small to divide by")]
    DivergenceGuard(f64),
    #[error("run aborted: {0}")]
    RunAbort(String),
    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;
