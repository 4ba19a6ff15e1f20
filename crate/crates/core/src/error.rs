use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension { op: &'static str, left: (usize, usize), right: (usize, usize) },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("fusion error: layer sets differ (only in long: {only_long:?}, only in short: {only_short:?})")]
    FusionLayers { only_long: Vec<String>, only_short: Vec<String> },

    #[error("fusion error: {0}")]
    Fusion(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error at line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("frozen base modified: hash {before} became {after}")]
    BaseModified { before: String, after: String },

    #[error("period {period} failed: {source}")]
    Period {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
