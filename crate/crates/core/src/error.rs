// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("shape mismatch for {what}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("size mismatch for {file}: expected {expected} bytes, found {actual}")]
    SizeMismatch {
        file: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("label {label} at sample {index} is outside [0, {num_languages})")]
    LabelOutOfRange {
        index: usize,
        label: u32,
        num_languages: usize,
    },

    #[error("language {0} has no samples")]
    MissingLanguage(String),

    #[error("invalid bundle: {0}")]
    InvalidBundle(String),

    #[error("language {language} has {available} samples, {required} required")]
    InsufficientSamples {
        language: String,
        available: usize,
        required: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient in {tensor} at step {step}")]
    NonFiniteGradient { tensor: String, step: u64 },

    #[error("degenerate training set: {present} of {expected} classes present")]
    DegenerateTrainSet { present: usize, expected: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("MLP probes have no single language direction")]
    NotLinearProbe,

    #[error("language index {index} out of range for {count} languages")]
    LanguageOutOfRange { index: usize, count: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least {required} values, got {actual}")]
    TooFewValues { required: usize, actual: usize },

    #[error("rule table line {line}: {message}")]
    RuleTable { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("group {0} has no models")]
    EmptyGroup(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
