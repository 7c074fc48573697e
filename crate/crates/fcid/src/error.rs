//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input plane")]
    EmptyPlane,

    #[error("bin count {0} is too small (need at least 2)")]
    BadBinCount(usize),

    #[error("histogram shape mismatch: {left} vs {right} bins")]
    BinCountMismatch { left: usize, right: usize },

    #[error("histogram range mismatch")]
    RangeMismatch,

    #[error("class has no images: {0}")]
    EmptyClass(&'static str),

    #[error("distinctive bin {index} out of range for {bins} bins")]
    BadBinIndex { index: usize, bins: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{n} samples cannot support {components} mixture components")]
    TooFewSamples { n: usize, components: usize },

    #[error("no samples for image")]
    NoSamples,

    #[error("training data contains a single class")]
    SingleClass,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },

    #[error("undefined rate: no {0} samples in ground truth")]
    UndefinedRate(&'static str),

    #[error("fold count {k} is invalid for {n} samples")]
    BadFoldCount { k: usize, n: usize },

    #[error("empty manifest")]
    EmptyManifest,

    #[error("manifest line {line}: {msg}")]
    Manifest { line: u64, msg: String },

    #[error("model version mismatch: file has `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },

    #[error("model method mismatch: {0}")]
    MethodMismatch(String),

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("train/test overlap: {count} shared image path(s), first `{first}`")]
    SplitOverlap { count: usize, first: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    ImageRead {
        path: PathBuf,
        source: image::ImageError,
    },

    #[error("image encode failed: {0}")]
    ImageWrite(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
