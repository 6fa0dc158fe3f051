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

    #[error("line {line}: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("unknown class label {label:?}{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownLabel { label: String, line: Option<usize> },

    #[error("class {0:?} has no records; cannot weight an absent class")]
    EmptyClass(&'static str),

    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),

    #[error("{persons} persons cannot fill {splits} non-empty splits")]
    InsufficientPersons { persons: usize, splits: usize },

    #[error("unsupported document type: {0}")]
    UnsupportedDocument(String),

    #[error("corrupt document {path}: {message}")]
    CorruptDocument { path: PathBuf, message: String },

    #[error("degenerate region {0:?}")]
    DegenerateRegion([f64; 4]),

    #[error("recognizer failed on region {index}: {message}")]
    Recognition { index: usize, message: String },

    #[error("{port} port: {message}")]
    Port { port: &'static str, message: String },

    #[error("augmentation strategy {strategy} requires a {port} port")]
    MissingPort {
        strategy: &'static str,
        port: &'static str,
    },

    #[error("invalid vocabulary: {0}")]
    Vocab(String),

    #[error("nothing to pool: attention mask is all zero")]
    EmptyMask,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("length mismatch: {0} true labels vs {1} predictions")]
    LengthMismatch(usize, usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("confusion matrix is empty")]
    EmptyConfusion,

    #[error("prediction references unknown image {0:?}")]
    UnknownImage(String),

    #[error(
        "{stage} stage failed{}{}: {source}",
        page.map(|p| format!(" on page {p}")).unwrap_or_default(),
        region.map(|r| format!(" at region {r}")).unwrap_or_default()
    )]
    Stage {
        stage: &'static str,
        page: Option<usize>,
        region: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("image: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn port(port: &'static str, message: impl Into<String>) -> Self {
        Error::Port {
            port,
            message: message.into(),
        }
    }
}
