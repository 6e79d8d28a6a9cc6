use thiserror::Error;

/// Errors raised by the accountant.
///
/// Variants split along the lines the command-line front end cares about:
/// bad inputs (`Domain`, `Precondition`) versus refusals to compute
/// (`SizeCap`, `Unsupported`, `Config`).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{what} = {got} exceeds the cap of {max}")]
    SizeCap {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("target delta {target:e} is unreachable; closest achievable value is {boundary:e}")]
    Unreachable { target: f64, boundary: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
