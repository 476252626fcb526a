use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("image of {width}x{height} too small for {levels} pyramid levels")]
    PyramidTooSmall {
        width: usize,
        height: usize,
        levels: usize,
    },
    #[error("contrast table is not strictly increasing")]
    NonMonotoneContrast,
    #[error("contrast transform maps intensities outside [0, 1]")]
    ContrastOutOfRange,
    #[error("patch window at ({x}, {y}) of size {size} lies outside the {width}x{height} image")]
    PatchOutOfBounds {
        x: i64,
        y: i64,
        size: usize,
        width: usize,
        height: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("accumulator holds no frames")]
    EmptyAccumulator,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("every synthesized view was rejected")]
    AllViewsRejected,
    #[error("synthesized lattice leaves the source image beyond the allowed margin")]
    SynthesisOutOfView,
    #[error("pixel has no finite depth")]
    NoDepth,
    #[error("scene is not in front of the camera")]
    SceneBehindCamera,
    #[error("model density is not normalized")]
    UnnormalizedModel,
    #[error("unknown track id {0}")]
    UnknownTrack(u64),
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Attributes an error to a pipeline stage.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
