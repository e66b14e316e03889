use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{what} is not unit length (norm {norm})")]
    NotUnit { what: &'static str, norm: f64 },

    #[error("configuration is back-facing: {0}")]
    BackFacing(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("channel {channel} out of range for a {channels}-channel table")]
    ChannelOutOfRange { channel: usize, channels: usize },

    #[error("rank-deficient lighting: {0}")]
    RankDeficient(String),

    #[error("empty candidate set")]
    EmptyCandidates,

    #[error("internal error: {0}")]
    Internal(String),

    #[error("pixel ({x}, {y}): {source}")]
    AtPixel {
        x: usize,
        y: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    pub(crate) fn at_pixel(self, x: usize, y: usize) -> Self {
        Error::AtPixel { x, y, source: Box::new(self) }
    }

    /// True for failures caused by bad input data or files, as opposed to
    /// numerical or internal failures.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Internal(_) => false,
            Error::AtPixel { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}
