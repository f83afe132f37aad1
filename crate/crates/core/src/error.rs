use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image is {width}x{height}, below the {min}x{min} minimum")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("malformed weight container header: {0}")]
    MalformedHeader(String),

    #[error("layer {layer}: shape chain mismatch: {detail}")]
    ShapeChain { layer: String, detail: String },

    #[error("layer {layer}: non-finite value in {tensor}")]
    NonFinite { layer: String, tensor: &'static str },

    #[error("weight payload digest mismatch (expected {expected}, found {found})")]
    DigestMismatch { expected: String, found: String },

    #[error("conv5_1 test vector mismatch: max abs diff {max_abs_diff} exceeds {tolerance}")]
    TestVectorMismatch { max_abs_diff: f32, tolerance: f32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(&'static str),

    #[error("non-finite input value")]
    NonFiniteInput,

    #[error("manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("no records")]
    NoRecords,

    #[error("unrecognized {dataset} layout under {root}: expected {expected}")]
    Layout {
        dataset: &'static str,
        root: PathBuf,
        expected: String,
    },

    #[error("transform {0}")]
    Transform(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    /// True for failures caused by the filesystem rather than by bad content.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::MissingFile(_))
            || matches!(self, Error::Csv(e) if e.is_io_error())
    }
}
