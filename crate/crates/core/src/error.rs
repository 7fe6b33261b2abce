use std::path::PathBuf;

/// Errors produced anywhere in the tracking pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("need at least 3 channels for principal components, got {0}")]
    InsufficientChannels(usize),

    #[error("features missing for frame {frame}, layer `{layer}`")]
    FeatureMissing { frame: u32, layer: String },

    #[error("malformed feature archive: {0}")]
    Format(String),

    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("length mismatch: {result} result boxes vs {truth} ground-truth boxes")]
    Alignment { result: usize, truth: usize },

    #[error("bad config: {0}")]
    Config(String),

    #[error("bad data in {path}: {msg}")]
    Data { path: PathBuf, msg: String },

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Attach a 1-based frame number to an error raised while processing it.
    pub fn at_frame(self, frame: usize) -> Error {
        match self {
            e @ Error::Frame { .. } => e,
            e => Error::Frame {
                frame,
                source: Box::new(e),
            },
        }
    }

    /// The innermost error, skipping frame annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Frame { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
