use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("dense matrix side {side} exceeds the cap of {cap}")]
    TooLarge { side: usize, cap: usize },

    #[error("degenerate bounding box (w = {w}, h = {h})")]
    DegenerateBox { w: f64, h: f64 },

    #[error("bounding box lies outside the frame")]
    BoxOutsideFrame,

    #[error("patch of {h}x{w} pixels is smaller than one {cell}-pixel cell")]
    PatchTooSmall { h: usize, w: usize, cell: usize },

    #[error("difference patch with {width} columns is too narrow to trim {edge} columns per side")]
    PatchTooNarrow { width: usize, edge: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("histograms have different bin counts ({left} vs {right})")]
    BinMismatch { left: usize, right: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("frame {0} has no depth channel")]
    MissingDepth(usize),

    #[error("missing frame {index} in {dir}")]
    MissingFrame { dir: PathBuf, index: u64 },

    #[error("corrupt image {path}: {source}")]
    CorruptImage {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: expected a 16-bit single-channel depth image, found {found}")]
    BitDepth { path: PathBuf, found: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input data rather than bad invocation.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::InvalidParameter(_))
    }
}
