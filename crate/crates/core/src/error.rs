use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = LlpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LlpError {
    #[error("empty input: {0}")]
    Empty(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vocabulary mismatch: model fingerprint {model} does not match {other}")]
    VocabularyMismatch { model: String, other: String },

    #[error("no token appears in at least {min_doc_count} documents")]
    EmptyVocabulary { min_doc_count: usize },

    #[error("unknown term `{0}`")]
    UnknownTerm(String),

    #[error("unknown region `{0}` (not present in the region table)")]
    UnknownRegion(String),

    #[error("regions missing from census table: {}", .0.join(", "))]
    MissingCensus(Vec<String>),

    #[error("missing population data: {0}")]
    MissingPopulation(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite cost or gradient in bag `{bag}`")]
    NonFinite { bag: String },

    #[error("conditional undefined: marginal probability is zero")]
    UndefinedConditional,

    #[error("no documents in window {start}..={end}")]
    NoDocuments { start: NaiveDate, end: NaiveDate },

    #[error("{path}, line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LlpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LlpError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        LlpError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
