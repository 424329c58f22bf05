//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum TraceError {
    /// A request failed local validation before reaching any backend.
    #[error("invalid request: {0}")]
    InvalidRequest(String),

    /// A transport-level failure that survived every retry attempt.
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },

    /// The backend rejected the prompt because it exceeds the model context.
    #[error("prompt exceeds the backend context limit ({limit}); shorten the input or raise the limit")]
    ContextLimit { limit: String },

    /// The backend answered with a non-retryable HTTP status.
    #[error("backend returned status {status}: {message}")]
    BackendStatus { status: u16, message: String },

    /// The backend response was missing a field the caller depends on.
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    /// A scripted backend in strict mode had no rule covering the request.
    #[error("no scripted response matches the request: {0}")]
    NoScriptedResponse(String),

    /// An option label does not map to a single token under the backend tokenizer.
    #[error("option label {0:?} is not a single token under the backend tokenizer")]
    MultiTokenLabel(String),

    /// The endpoint cannot return token logits.
    #[error("backend does not expose token logits; point the selector at a logit-capable endpoint or enable single-token mode")]
    LogitsUnavailable,

    /// Embedding vectors in one batch disagree on dimension.
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    EmbeddingDimension { expected: usize, got: usize },

    /// A scripted backend file could not be interpreted.
    #[error("invalid backend script {path}: {message}")]
    InvalidScript { path: String, message: String },

    /// The selector emitted a token that is not one of the offered labels.
    #[error("selector output {0:?} is not an offered option label")]
    UnknownLabel(String),

    /// A dataset or store file used an unknown format name.
    #[error("unknown dataset format {0:?}; expected hotpotqa, twowiki, or musique")]
    UnknownFormat(String),

    /// A demonstration store declared a different kind than the caller expected.
    #[error("demonstration store {path} has kind {found:?}, expected {expected:?}")]
    DemoKindMismatch {
        path: String,
        found: String,
        expected: String,
    },

    /// Configuration failed validation.
    #[error("invalid configuration at {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    /// A stage needs an artifact that a previous stage has not produced.
    #[error("missing artifact for {stage}: {path} (run `{hint}` first)")]
    MissingArtifact {
        stage: String,
        path: String,
        hint: String,
    },

    /// Predictions reference question ids absent from the dataset.
    #[error("predictions reference unknown question ids: {0:?}")]
    OrphanPredictions(Vec<String>),

    /// Processing one question failed; the id names the question.
    #[error("question {id} failed: {source}")]
    QuestionFailed {
        id: String,
        #[source]
        source: Box<TraceError>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl TraceError {
    /// Attach a file path to a raw I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        TraceError::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach a file path to a JSON decoding error.
    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        TraceError::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, TraceError>;
