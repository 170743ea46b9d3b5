use std::path::PathBuf;

/// Errors produced across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no queries")]
    NoQueries,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("degenerate base sample")]
    DegenerateBaseSample,

    #[error("degenerate selection labels")]
    DegenerateSelectionLabels,

    #[error("degenerate labels: only one class present")]
    DegenerateLabels,

    #[error("empty click log")]
    EmptyClickLog,

    #[error("no selection variation")]
    NoSelectionVariation,

    #[error("noise requested but no observed irrelevant documents exist")]
    NoNoiseTargets,

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("mismatched document sets for query {0}")]
    MismatchedDocuments(String),

    #[error("unknown query: {0}")]
    UnknownQuery(String),

    #[error("unknown document {doc_id} in query {query_id}")]
    UnknownDocument { query_id: String, doc_id: String },

    #[error("no queries with relevant documents")]
    NoRelevantQueries,

    #[error("config error: {0}")]
    Config(String),

    #[error("model format error: {0}")]
    ModelFormat(String),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cell (eta={eta}, k={k}, noise={noise}, seed={seed}): {source}")]
    Cell {
        eta: f64,
        k: usize,
        noise: f64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Strips cell annotations and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Cell { source, .. } => source.root(),
            other => other,
        }
    }
}
