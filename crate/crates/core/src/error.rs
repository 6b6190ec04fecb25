use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the core algorithms.
///
/// Every variant renders as `<category>: <message>` so callers can surface a
/// single machine-parsable line.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value is outside the mathematical domain of an operation.
    Domain(String),
    /// A configuration violates its invariants.
    Config(String),
    /// Tensor or grid dimensions do not agree.
    Shape(String),
    /// A depth pair has no observed ground-truth pixel.
    EmptyMask,
    /// Median alignment was requested but the prediction median is zero.
    DegenerateScale,
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::EmptyMask => "empty-mask",
            Error::DegenerateScale => "degenerate-scale",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(m) | Error::Config(m) | Error::Shape(m) => {
                write!(f, "{}: {}", self.category(), m)
            }
            Error::EmptyMask => write!(f, "empty-mask: no observed ground-truth pixel"),
            Error::DegenerateScale => {
                write!(f, "degenerate-scale: prediction median is zero on the observed mask")
            }
        }
    }
}

impl core::error::Error for Error {}
