use alloc::string::String;

/// Errors raised by the simulator core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Input violates a structural invariant (gaps in layer indices, bad assignment...).
    #[error("validation error: {0}")]
    Validation(String),
    /// Argument outside the operation's domain (cut index, subcarrier count...).
    #[error("domain error: {0}")]
    Domain(String),
    /// Tensor shapes do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// No feasible decision exists for the instance.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// An exhaustive oracle refused to run because the instance is too large.
    #[error("enumeration guard exceeded: {count} candidates > limit {limit}")]
    GuardExceeded { count: u128, limit: u128 },
}

pub type Result<T> = core::result::Result<T, Error>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
