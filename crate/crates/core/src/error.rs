use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported format in {}: {reason}", .path.display())]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("corrupt data in {}: {reason}", .path.display())]
    Corrupt { path: PathBuf, reason: String },

    #[error("extent mismatch: expected {expected:?}, found {found:?}")]
    ExtentMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid image data: {0}")]
    InvalidData(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {0}")]
    TooSmall(String),

    #[error("degenerate instance: empty support")]
    DegenerateInstance,

    #[error("degenerate pixel weights at ({x}, {y})")]
    DegenerateWeights { x: usize, y: usize },

    #[error("channel count mismatch: expected {expected}, found {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("missing metric column: {0}")]
    MissingMetric(String),

    #[error("malformed annotation index {}: {reason}", .path.display())]
    MalformedIndex { path: PathBuf, reason: String },

    #[error("schema violation in record {record:?}, field `{field}`: {reason}")]
    Schema {
        record: String,
        field: String,
        reason: String,
    },

    #[error("record {record:?}: cannot resolve {}", .path.display())]
    PathResolution { record: String, path: PathBuf },

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileNotFound(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn check_extent(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::ExtentMismatch { expected, found })
        }
    }
}
