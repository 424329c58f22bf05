//! Model backends.
//!
//! Every stage of the pipeline talks to a language model through the
//! [`ModelBackend`] trait: free-form generation, per-option logits for
//! multiple-choice prompts, and text embeddings. Two implementations are
//! provided: a fully deterministic [`ScriptedBackend`] driven by a JSON
//! table (used by tests, examples, and offline runs) and an
//! [`HttpBackend`] speaking the OpenAI-compatible chat/embeddings
//! protocol. Wrappers in [`instrument`] add call counting and structured
//! call logs without changing behaviour.

mod http;
pub mod instrument;
mod scripted;

pub use http::{HttpBackend, HttpBackendConfig};
pub use scripted::ScriptedBackend;

use crate::error::{Result, TraceError};

/// Which side of a retrieval pair a text belongs to.
///
/// Embedding models trained with instruction prefixes score queries and
/// passages differently; the backend prepends its configured prefix for
/// the given role before embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingRole {
    Query,
    Passage,
}

/// A free-form generation request.
#[derive(Debug, Clone)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Upper bound on generated tokens; must be at least 1.
    pub max_tokens: u32,
    /// Sampling temperature; 0 selects greedy decoding.
    pub temperature: f64,
    /// Generation halts before the first occurrence of any stop sequence.
    pub stop: Vec<String>,
}

impl GenerationRequest {
    /// Greedy request with the given token budget and no stop sequences.
    pub fn greedy(prompt: impl Into<String>, max_tokens: u32) -> Self {
        GenerationRequest {
            prompt: prompt.into(),
            max_tokens,
            temperature: 0.0,
            stop: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(TraceError::InvalidRequest("prompt must be non-empty".into()));
        }
        if self.max_tokens == 0 {
            return Err(TraceError::InvalidRequest("max_tokens must be >= 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(TraceError::InvalidRequest(
                "temperature must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// A request for the logits of a fixed set of single-token option labels.
#[derive(Debug, Clone)]
pub struct OptionLogitRequest {
    pub prompt: String,
    /// Pairwise-distinct labels, each a single token under the backend tokenizer.
    pub labels: Vec<String>,
}

impl OptionLogitRequest {
    fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() {
            return Err(TraceError::InvalidRequest("prompt must be non-empty".into()));
        }
        if self.labels.is_empty() {
            return Err(TraceError::InvalidRequest(
                "option labels must be non-empty".into(),
            ));
        }
        for (i, a) in self.labels.iter().enumerate() {
            if self.labels[..i].contains(a) {
                return Err(TraceError::InvalidRequest(format!(
                    "option labels must be pairwise distinct; {a:?} repeats"
                )));
            }
        }
        Ok(())
    }
}

/// A batch embedding request.
#[derive(Debug, Clone)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
    pub role: EmbeddingRole,
}

impl EmbeddingRequest {
    pub fn new(texts: Vec<String>, role: EmbeddingRole) -> Self {
        EmbeddingRequest { texts, role }
    }

    fn validate(&self) -> Result<()> {
        if self.texts.is_empty() {
            return Err(TraceError::InvalidRequest(
                "embedding batch must be non-empty".into(),
            ));
        }
        Ok(())
    }
}

/// A language-model backend usable concurrently from many workers.
pub trait ModelBackend: Send + Sync {
    /// Generate a continuation of `req.prompt` with stop sequences removed.
    fn generate(&self, req: &GenerationRequest) -> Result<String>;

    /// Return one logit per entry of `req.labels`, in request order.
    ///
    /// A logit is returned for every requested label, including labels the
    /// model would never emit.
    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>>;

    /// Embed a batch of texts; all returned vectors share one dimension.
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>>;
}

impl<T: ModelBackend + ?Sized> ModelBackend for &T {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        (**self).generate(req)
    }
    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        (**self).option_logits(req)
    }
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        (**self).embed(req)
    }
}

impl<T: ModelBackend + ?Sized> ModelBackend for std::sync::Arc<T> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        (**self).generate(req)
    }
    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        (**self).option_logits(req)
    }
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        (**self).embed(req)
    }
}

/// Cut `text` before the first occurrence of any stop sequence.
fn apply_stop_sequences(text: &str, stop: &[String]) -> String {
    let mut cut = text.len();
    for s in stop {
        if s.is_empty() {
            continue;
        }
        if let Some(pos) = text.find(s.as_str()) {
            cut = cut.min(pos);
        }
    }
    text[..cut].to_string()
}

/// Require every label to be a single token; both backends tokenize
/// option labels as single characters.
fn validate_single_token_labels(labels: &[String]) -> Result<()> {
    for label in labels {
        if label.trim().chars().count() != 1 {
            return Err(TraceError::MultiTokenLabel(label.clone()));
        }
    }
    Ok(())
}

/// Enforce that a returned batch is dimensionally consistent.
fn validate_embedding_batch(vectors: &[Vec<f64>]) -> Result<()> {
    let expected = match vectors.first() {
        Some(v) => v.len(),
        None => return Ok(()),
    };
    if expected == 0 {
        return Err(TraceError::EmbeddingDimension {
            expected: 1,
            got: 0,
        });
    }
    for v in vectors {
        if v.len() != expected {
            return Err(TraceError::EmbeddingDimension {
                expected,
                got: v.len(),
            });
        }
    }
    Ok(())
}

/// Prepend the role prefix an embedding model expects.
fn apply_role_prefix(query_prefix: &str, passage_prefix: &str, role: EmbeddingRole, text: &str) -> String {
    match role {
        EmbeddingRole::Query => format!("{query_prefix}{text}"),
        EmbeddingRole::Passage => format!("{passage_prefix}{text}"),
    }
}
