use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum FstError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed header {path}: {message}")]
    Header { path: PathBuf, message: String },
    #[error("size mismatch: header declares {expected} values, binary holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("label id {0} does not fit the 16-bit label range")]
    LabelOverflow(u64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{layer}: band count {bands} is too small for spectral support {support}")]
    TooFewBands {
        layer: &'static str,
        bands: usize,
        support: usize,
    },
    #[error("window support {support} exceeds twice the volume extent {extent} on axis {axis}")]
    WindowTooLarge {
        axis: usize,
        support: usize,
        extent: usize,
    },
    #[error("invalid sampling request: {0}")]
    Sampling(String),
    #[error("empty test set")]
    EmptyTestSet,
    #[error("class id {class} exceeds palette of {palette} entries")]
    PaletteOverflow { class: u16, palette: usize },
    #[error("pixel ({row}, {col}) is outside the {height}x{width} grid")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("image encoding failed: {0}")]
    Image(String),
}

/// Coarse error class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numeric,
}

impl FstError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FstError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn header(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        FstError::Header {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            FstError::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }
}

pub type Result<T, E = FstError> = std::result::Result<T, E>;
