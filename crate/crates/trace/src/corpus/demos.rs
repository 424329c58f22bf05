//! Demonstration stores for in-context prompts.
//!
//! A store holds labelled examples keyed by the text they were written
//! for: documents for triple extraction, questions for chain
//! construction. At use time the entries closest to the current input
//! under the embedding inner product are spliced into the prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backend::{EmbeddingRequest, EmbeddingRole, ModelBackend};
use crate::error::{Result, TraceError};

/// What a store's demonstrations teach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoKind {
    /// Keys are documents; demos show extracted knowledge triples.
    KgGeneration,
    /// Keys are questions; demos show step-by-step triple selection.
    ChainConstruction,
}

impl DemoKind {
    fn name(self) -> &'static str {
        match self {
            DemoKind::KgGeneration => "kg_generation",
            DemoKind::ChainConstruction => "chain_construction",
        }
    }
}

/// One labelled example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoEntry {
    /// Text the entry is retrieved by (a document or a question).
    pub key_text: String,
    /// Fully rendered demonstration block spliced into prompts verbatim.
    pub demo_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoStore {
    pub kind: DemoKind,
    pub entries: Vec<DemoEntry>,
}

impl DemoStore {
    /// Load a store and check it declares the expected kind.
    pub fn load(path: impl AsRef<Path>, expected: DemoKind) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TraceError::io(path.display().to_string(), e))?;
        let store: DemoStore = serde_json::from_str(&text)
            .map_err(|e| TraceError::json(path.display().to_string(), e))?;
        if store.kind != expected {
            return Err(TraceError::DemoKindMismatch {
                path: path.display().to_string(),
                found: store.kind.name().into(),
                expected: expected.name().into(),
            });
        }
        Ok(store)
    }

    /// An empty store of the given kind.
    pub fn empty(kind: DemoKind) -> Self {
        DemoStore {
            kind,
            entries: Vec::new(),
        }
    }
}

/// A store with its entry keys embedded once, ready for selection.
pub struct DemoIndex {
    store: DemoStore,
    key_vectors: Vec<Vec<f64>>,
}

impl DemoIndex {
    /// Embed every entry key (as passages) in a single batch.
    pub fn build(store: DemoStore, embedder: &dyn ModelBackend) -> Result<Self> {
        let key_vectors = if store.entries.is_empty() {
            Vec::new()
        } else {
            let texts = store.entries.iter().map(|e| e.key_text.clone()).collect();
            embedder.embed(&EmbeddingRequest::new(texts, EmbeddingRole::Passage))?
        };
        Ok(DemoIndex { store, key_vectors })
    }

    pub fn kind(&self) -> DemoKind {
        self.store.kind
    }

    pub fn len(&self) -> usize {
        self.store.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.entries.is_empty()
    }

    /// The `n` demo texts whose keys score highest against `key_text`.
    ///
    /// Scores are embedding inner products with the input embedded as a
    /// query; ties break toward the earlier entry, and asking for more
    /// demos than the store holds returns all of them.
    pub fn select(&self, key_text: &str, n: usize, embedder: &dyn ModelBackend) -> Result<Vec<String>> {
        if n == 0 || self.store.entries.is_empty() {
            return Ok(Vec::new());
        }
        let query = embedder
            .embed(&EmbeddingRequest::new(
                vec![key_text.to_string()],
                EmbeddingRole::Query,
            ))?
            .remove(0);
        let mut scored: Vec<(usize, f64)> = self
            .key_vectors
            .iter()
            .enumerate()
            .map(|(i, key)| (i, dot(&query, key)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(n)
            .map(|(i, _)| self.store.entries[i].demo_text.clone())
            .collect())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
