use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter violates a documented invariant; the message names it.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// A precondition of an operation does not hold for the given input.
    #[error("precondition violated: {0}")]
    Precondition(String),
    /// Two fields or problems were built on different grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    /// A region restriction selected no cells.
    #[error("region selects no cells")]
    EmptyRegion,
    /// Energy or gradient evaluated to a non-finite number.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    /// Scalar root bracketing failed in the 1D oracle.
    #[error("bisection failed: {0}")]
    Bisection(String),
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidParameter(alloc::format!($($arg)*))
    };
}

macro_rules! precondition {
    ($($arg:tt)*) => {
        $crate::Error::Precondition(alloc::format!($($arg)*))
    };
}

pub(crate) use invalid;
pub(crate) use precondition;
