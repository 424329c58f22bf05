//! Knowledge-grounded reasoning chains for multi-hop question answering.
//!
//! Given a question and its retrieved documents, this crate builds a
//! question-local knowledge graph by prompting a language model to
//! extract triples from each document, then constructs reasoning chains
//! over that graph with beam search: an embedding model proposes
//! candidate triples, a language model prices them through a
//! multiple-choice prompt, and the chain either grows or terminates
//! itself. The chains answer the question directly as compact context,
//! or vote for the documents worth reading in full.
//!
//! The pieces compose freely as a library; the `trace` binary runs them
//! as a staged pipeline driven by one JSON config. Model access goes
//! through the [`backend::ModelBackend`] trait, with an HTTP client for
//! OpenAI-compatible endpoints and a scripted implementation for
//! deterministic offline runs.
//!
//! ```no_run
//! use trace::backend::ScriptedBackend;
//! use trace::chain::{construct_chains, ChainConfig};
//! use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
//! use trace::kg::KnowledgeGraph;
//!
//! # fn main() -> trace::Result<()> {
//! let backend = ScriptedBackend::from_path("script.json")?;
//! let demos = DemoIndex::build(DemoStore::empty(DemoKind::ChainConstruction), &backend)?;
//! let kg = KnowledgeGraph::from_triples(vec![]);
//! let chains = construct_chains(
//!     "who?", "q1", &kg, &ChainConfig::default(), &backend, &backend, &demos,
//! )?;
//! # Ok(())
//! # }
//! ```

pub mod backend;
pub mod chain;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod kg;
pub mod pipeline;
pub mod ranker;
pub mod reader;
pub mod selector;
mod template;

pub use backend::{HttpBackend, HttpBackendConfig, ModelBackend, ScriptedBackend};
pub use chain::{construct_chains, ChainConfig, ReasoningChain};
pub use corpus::{load_dataset, DatasetFormat, Document, QAItem};
pub use error::{Result, TraceError};
pub use eval::{evaluate_run, exact_match, f1, normalize_answer, EvalReport};
pub use kg::{parse_triples, KnowledgeGraph, KnowledgeTriple};
pub use pipeline::{load_config, Pipeline, RunConfig};
pub use reader::{build_context, order_triples, vote_documents, Prediction, ReaderMode};
