use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("sample rate mismatch: clip is {clip_hz} Hz but the filter was designed for {design_hz} Hz")]
    RateMismatch { clip_hz: u32, design_hz: u32 },

    #[error("unsupported sample rate {rate_hz} Hz: must exceed {min_hz} Hz")]
    UnsupportedRate { rate_hz: u32, min_hz: u32 },

    #[error("clip too short: {len} samples, need at least {min}")]
    TooShort { len: usize, min: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("state error: {0}")]
    State(String),

    #[error("split error for class {class}: {msg}")]
    Split { class: String, msg: String },

    #[error("decode error at byte {offset}: {msg}")]
    Decode { offset: usize, msg: String },

    #[error("dataset layout error: {0}")]
    Layout(String),

    #[error("manifest consistency error at line {line}: {msg}")]
    Consistency { line: usize, msg: String },

    #[error("not a model artifact: {0}")]
    NotAModel(String),

    #[error("model artifact is corrupt: {0}")]
    Corrupt(String),

    #[error("unsupported model artifact version {0}")]
    Version(u16),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Coarse category used by front ends to pick exit or status codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::NotAModel(_) | Error::Corrupt(_) | Error::Version(_) | Error::State(_) => {
                ErrorKind::Model
            }
            Error::InvalidConfig(_) | Error::Shape(_) | Error::Divergence { .. } => {
                ErrorKind::Config
            }
            _ => ErrorKind::Data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Model,
    Io,
}
