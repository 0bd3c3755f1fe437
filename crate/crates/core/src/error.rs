use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of an external capability (HTTP provider or plug-in).
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{provider} provider unavailable: {reason}")]
pub struct ProviderError {
    pub provider: String,
    pub reason: String,
}

impl ProviderError {
    pub fn new(provider: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            provider: provider.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("text is empty")]
    EmptyText,
    #[error("query has no indexable terms")]
    EmptyQuery,
    #[error(transparent)]
    ProviderUnavailable(#[from] ProviderError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("embedding dimension mismatch in training set: expected {expected}, got {got}")]
    EmbeddingDimensionMismatch { expected: usize, got: usize },
    #[error("unknown intent label {0:?}")]
    UnknownIntent(String),
    #[error("row {row} has {got} cells, header has {expected}")]
    RaggedTable {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("table header is empty")]
    EmptyHeader,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("document {id}: invalid table: {reason}")]
    InvalidTable { id: String, reason: String },
    #[error("document {0}: tabular documents require an intent_tag")]
    MissingIntentTag(String),
    #[error("document {0}: only tabular documents may carry an intent_tag")]
    UnexpectedIntentTag(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("tool {0:?} is already registered")]
    DuplicateToolName(String),
    #[error("malformed url template for tool {tool:?}: {reason}")]
    MalformedTemplate { tool: String, reason: String },
    #[error("invalid language tag {0:?}")]
    InvalidLanguageTag(String),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
