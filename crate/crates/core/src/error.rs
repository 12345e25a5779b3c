use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A structural invariant of the data model does not hold.
    InvalidData(String),
    /// A numeric argument is outside its domain.
    OutOfRange {
        what: &'static str,
        value: f64,
    },
    /// A text transform was given input it cannot act on.
    InvalidInput(String),
    /// No prediction was supplied for a member of a group.
    MissingPrediction {
        group_id: String,
        variant_id: String,
    },
    /// Statistics requested on an empty (or all-undefined) sample.
    EmptySample(&'static str),
    /// Correlation is undefined for a constant series.
    ConstantSeries,
    LengthMismatch {
        left: usize,
        right: usize,
    },
    /// A paraphrase provider failed for a group.
    Provider {
        group_id: String,
        message: String,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidData(msg) => write!(f, "invalid data: {msg}"),
            Error::OutOfRange { what, value } => write!(f, "{what} out of range: {value}"),
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::MissingPrediction { group_id, variant_id } => {
                write!(f, "missing prediction for group_id={group_id} variant_id={variant_id}")
            }
            Error::EmptySample(what) => write!(f, "no defined values for {what}"),
            Error::ConstantSeries => f.write_str("correlation undefined for a constant series"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::Provider { group_id, message } => {
                write!(f, "paraphrase provider failed for group {group_id}: {message}")
            }
        }
    }
}

impl core::error::Error for Error {}
