//! Crate-wide error type.
//!
//! Every fallible public operation returns [`Result`]. Variants map onto the
//! failure surfaces of the toolkit: shape/domain violations in the numeric
//! core, malformed input files, misaligned prediction sets, and protocol
//! misuse (e.g. backprop without a cached forward pass).

use std::fmt;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// Incompatible matrix or batch shapes; the message names both operands.
    Shape(String),
    /// Argument outside its mathematical domain (e.g. `lo >= hi`).
    Domain(String),
    /// Invalid configuration (unknown head kind, bad hyperparameter, ...).
    Config(String),
    /// Invalid data content: out-of-range label, duplicate id, empty split.
    Data(String),
    /// Text input that failed to parse; `line` is 1-based.
    Parse { line: usize, message: String },
    /// Binary envelope violation; `offset` is the byte position of the fault.
    Format { offset: u64, message: String },
    /// Two sample collections could not be aligned by id.
    Alignment(String),
    /// API called out of order (e.g. backprop before a train-mode forward).
    Protocol(String),
    /// A public operation produced or received a NaN/Inf.
    NonFinite(String),
    Io(std::io::Error),
    Json(serde_json::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Domain(m) => write!(f, "domain error: {m}"),
            Error::Config(m) => write!(f, "configuration error: {m}"),
            Error::Data(m) => write!(f, "data error: {m}"),
            Error::Parse { line, message } => write!(f, "parse error at line {line}: {message}"),
            Error::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            Error::Alignment(m) => write!(f, "alignment error: {m}"),
            Error::Protocol(m) => write!(f, "protocol error: {m}"),
            Error::NonFinite(m) => write!(f, "non-finite value: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}

impl Error {
    /// Stable machine-readable kind tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Parse { .. } => "parse",
            Error::Format { .. } => "format",
            Error::Alignment(_) => "alignment",
            Error::Protocol(_) => "protocol",
            Error::NonFinite(_) => "non_finite",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Serializes the error as `{"error": kind, "message": ...}`.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
