use std::path::PathBuf;

use thiserror::Error;

use crate::training::RunManifest;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("template parse error at char {position}: {message}")]
    TemplateParse { position: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown label: {0}")]
    Lookup(String),

    #[error("ontology error: {0}")]
    Ontology(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("out of bounds: {0}")]
    Bounds(String),

    #[error("input has {length} subword tokens, backend limit is {limit}")]
    Truncation { length: usize, limit: usize },

    #[error("cannot ingest {}: {message}", path.display())]
    Ingestion { path: PathBuf, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("training stream contains target-ontology labels: {0}")]
    Leakage(String),

    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize, manifest: Box<RunManifest> },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Validation(_) | Error::TemplateParse { .. } => ErrorKind::Usage,
            Error::NonFinite { .. } => ErrorKind::Numeric,
            Error::Shape(_) => ErrorKind::Internal,
            Error::Lookup(_)
            | Error::Ontology(_)
            | Error::Bounds(_)
            | Error::Truncation { .. }
            | Error::Ingestion { .. }
            | Error::Data(_)
            | Error::Leakage(_)
            | Error::Io { .. }
            | Error::Json(_) => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
