use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("malformed image {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },

    #[error("insufficient frames: found {found}, need at least {need}")]
    InsufficientFrames { found: usize, need: usize },

    #[error("frame dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),

    #[error("vector length {got} does not match model dimension {expected}")]
    VectorDimension { got: usize, expected: usize },

    #[error("requested {k} components but only {available} samples available")]
    TooManyComponents { k: usize, available: usize },

    #[error("no variance in training data")]
    NoVariance,

    #[error("kernel evaluation produced non-finite values; rescale the input features")]
    NonFiniteKernel,

    #[error("training set needs at least {need} classes")]
    TooFewClasses { need: usize },

    #[error("too few trajectory points: {got}, need at least {need}")]
    TooFewPoints { got: usize, need: usize },

    #[error("zero-length trajectory: all points coincident")]
    ZeroLengthTrajectory,

    #[error("arc position {s} outside [0, {len}]")]
    ArcOutOfRange { s: f64, len: f64 },

    #[error("osculating plane undefined: no valid curved segments")]
    PlaneUndefined,

    #[error("degenerate point set: need at least 3 non-collinear points")]
    DegeneratePlaneFit,

    #[error("empty model: no labeled clouds to classify against")]
    EmptyModel,

    #[error("empty training set")]
    EmptyTrainingSet,

    #[error("knn k={k} exceeds training size {n}")]
    KnnTooLarge { k: usize, n: usize },

    #[error("empty index")]
    EmptyIndex,

    #[error("malformed index file at line {line}: {reason}")]
    MalformedIndex { line: usize, reason: String },

    #[error("index version {got} unsupported (expected {expected})")]
    IndexVersion { got: u32, expected: u32 },

    #[error("model file corrupt: {0}")]
    MalformedModel(String),

    #[error("model version {got} unsupported (expected {expected})")]
    ModelVersion { got: u16, expected: u16 },

    #[error("overlapping contradictory ground-truth labels at frame {frame}")]
    ContradictoryGroundTruth { frame: usize },

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("query clip is a null action (no usable motion)")]
    NullQuery,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
