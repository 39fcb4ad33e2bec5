use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the engine. Every variant carries a human-readable
/// diagnostic naming the offending values.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two tensors (or a tensor and a parameter) have incompatible dimensions.
    Shape(String),
    /// A fit could not be performed with the data supplied.
    Fit(String),
    /// Input data is corrupt or non-finite.
    Data(String),
    /// A linear system could not be solved.
    Singular(String),
    /// A configuration value is out of range.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape error: {msg}"),
            Error::Fit(msg) => write!(f, "fit error: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
            Error::Singular(msg) => write!(f, "solver error: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(alloc::format!($($arg)*))
    };
}
pub(crate) use shape_err;
