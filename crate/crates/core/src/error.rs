use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, HceError>;

#[derive(Debug, Error)]
pub enum HceError {
    #[error("vector norm {norm:e} is at or below the zero-norm threshold")]
    ZeroNorm { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in vector")]
    NonFinite,

    #[error("cannot encode an empty token sequence")]
    EmptyTokens,

    #[error("invalid cluster count {k} for {n} vectors")]
    InvalidK { k: usize, n: usize },

    #[error("unknown document: {0}")]
    UnknownDocument(String),

    #[error("duplicate document id: {0}")]
    DuplicateDocId(String),

    #[error("invalid path prefix {prefix:?}: {reason}")]
    InvalidPrefix { prefix: Vec<usize>, reason: String },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no relevance judgments for query {0}")]
    MissingJudgments(String),

    #[error("requested {requested} new documents but only {available} are available")]
    InsufficientNewDocs { requested: usize, available: usize },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: u64, loss: f64 },

    #[error("document {doc_id}: {source}")]
    Document {
        doc_id: String,
        #[source]
        source: Box<HceError>,
    },

    #[error("query {query_id}: {source}")]
    Query {
        query_id: String,
        #[source]
        source: Box<HceError>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("unsupported format version: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("configuration error: {0}")]
    Config(String),
}

impl HceError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HceError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        HceError::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn for_document(self, doc_id: &str) -> Self {
        HceError::Document {
            doc_id: doc_id.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn for_query(self, query_id: &str) -> Self {
        HceError::Query {
            query_id: query_id.to_string(),
            source: Box::new(self),
        }
    }
}
