use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the workbench.
#[derive(Debug, Error)]
pub enum Error {
    #[error("buffer is empty")]
    Empty,
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("sample rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error("every sample is zero")]
    AllZero,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    RateMismatch { left: f64, right: f64 },

    #[error("duration {0} s is below the 2 s minimum")]
    BadDuration(f64),
    #[error("unknown contaminant label `{0}`")]
    UnknownLabel(String),
    #[error("invalid contaminant set: {0}")]
    BadLabelSet(String),
    #[error("contaminant component {0} has zero energy")]
    ZeroNoise(String),

    #[error("invalid cutoff: {0}")]
    BadCutoff(String),
    #[error("filter order must be a positive even integer, got {0}")]
    BadOrder(usize),
    #[error("signal of length {len} is too short (need more than {need})")]
    TooShort { len: usize, need: usize },
    #[error("invalid window: {0}")]
    BadWindow(String),

    #[error("rule needs at least {need} modes, got {got}")]
    TooFewModes { need: usize, got: usize },
    #[error("VMD did not converge after {iterations} iterations (relative change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },

    #[error("enhanced signal equals the reference; SNR is infinite")]
    PerfectMatch,
    #[error("reference signal has zero energy")]
    ZeroReference,
    #[error("no comparable frames between feature vectors")]
    NoComparableFrames,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("cache does not belong to a train-mode forward pass of these parameters")]
    StaleCache,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("not a weights file: {0}")]
    BadMagic(String),

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),
    #[error("malformed input {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
