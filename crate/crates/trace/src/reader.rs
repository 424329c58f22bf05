//! Answer generation from reasoning chains.
//!
//! Chains feed the reader in one of two ways: directly, as ordered triple
//! text, or indirectly, by voting for the source documents of their
//! triples and handing the winners' full text to the reader. Two baseline
//! modes (no context, all retrieved documents) share the same prompt.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::{GenerationRequest, ModelBackend};
use crate::chain::ReasoningChain;
use crate::corpus::Document;
use crate::error::Result;
use crate::template::render;

/// Prompt for answer generation. The context block is dropped entirely
/// when no context is supplied.
const READER_TEMPLATE: &str = "Given some contexts and a question, please only output the answer to the question.\ncontext:\n{context}\nquestion: {question}\nthe correct answer is:";
const READER_TEMPLATE_NO_CONTEXT: &str = "Given some contexts and a question, please only output the answer to the question.\nquestion: {question}\nthe correct answer is:";

const READER_MAX_TOKENS: u32 = 100;

/// What the reader sees as context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderMode {
    /// Chain triples rendered as text, best chain first.
    Triple,
    /// Full text of documents elected by chain votes.
    Doc,
    /// No context at all.
    None,
    /// Every retrieved document, bypassing the chains.
    AllDocs,
}

impl ReaderMode {
    pub fn name(&self) -> &'static str {
        match self {
            ReaderMode::Triple => "triple",
            ReaderMode::Doc => "doc",
            ReaderMode::None => "none",
            ReaderMode::AllDocs => "all_docs",
        }
    }
}

/// Context assembled for one question, ready for the reader.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextBundle {
    pub mode: ReaderMode,
    pub context_text: String,
    /// Whitespace-separated token count of the context text.
    pub token_count: usize,
    /// Titles of the documents backing this context, in vote order for
    /// document modes, retrieval order otherwise. Empty for triple and
    /// no-context modes.
    pub voted_titles: Vec<String>,
}

impl ContextBundle {
    fn new(mode: ReaderMode, context_text: String, voted_titles: Vec<String>) -> Self {
        let token_count = count_tokens(&context_text);
        ContextBundle {
            mode,
            context_text,
            token_count,
            voted_titles,
        }
    }
}

/// The reader's output for one question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub answer: String,
    pub mode: ReaderMode,
    pub context_tokens: usize,
    pub voted_titles: Vec<String>,
}

/// Whitespace tokenization, the unit for context-size reporting.
pub fn count_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Render chains as reader context: triples joined with ", " inside a
/// chain, chains separated by newlines, best chain first.
pub fn order_triples(chains: &[ReasoningChain]) -> String {
    chains
        .iter()
        .filter(|c| !c.is_empty())
        .map(|c| c.render())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Document-vote tuning.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VoteConfig {
    /// Weight each vote by its chain's score instead of counting 1.
    pub score_weighted: bool,
    /// Count each distinct triple once even if several chains use it.
    pub unique_triple: bool,
}

/// Elect documents by chain votes.
///
/// Every triple occurrence in every chain casts one vote for the document
/// it was extracted from, resolved by source title. Returns the voted
/// documents, most votes first with ties kept in retrieval order, plus
/// the number of votes that named a title absent from `documents`.
/// Zero-vote documents are dropped.
pub fn vote_documents<'d>(
    chains: &[ReasoningChain],
    documents: &'d [Document],
    cfg: VoteConfig,
) -> (Vec<&'d Document>, usize) {
    let mut position: HashMap<&str, usize> = HashMap::new();
    for (i, doc) in documents.iter().enumerate() {
        position.entry(doc.title.as_str()).or_insert(i);
    }
    let mut tallies: Vec<f64> = vec![0.0; documents.len()];
    let mut unresolved = 0usize;
    let mut seen_triples: Vec<&crate::kg::KnowledgeTriple> = Vec::new();
    for chain in chains {
        for triple in &chain.triples {
            if cfg.unique_triple {
                if seen_triples.iter().any(|t| *t == triple) {
                    continue;
                }
                seen_triples.push(triple);
            }
            match position.get(triple.source_title.as_str()) {
                Some(&i) => {
                    tallies[i] += if cfg.score_weighted { chain.score } else { 1.0 };
                }
                None => {
                    log::warn!(
                        "vote for unknown source document {:?} dropped",
                        triple.source_title
                    );
                    unresolved += 1;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..documents.len())
        .filter(|&i| tallies[i] > 0.0)
        .collect();
    order.sort_by(|&a, &b| tallies[b].total_cmp(&tallies[a]).then(a.cmp(&b)));
    (order.into_iter().map(|i| &documents[i]).collect(), unresolved)
}

/// Render documents as reader context, one titled block per document.
pub fn render_documents(documents: &[&Document]) -> String {
    documents
        .iter()
        .map(|d| format!("Title: {}\nText: {}", d.title, d.text))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Assemble the reader context for one question under the given mode.
pub fn build_context(
    mode: ReaderMode,
    chains: &[ReasoningChain],
    documents: &[Document],
    vote_cfg: VoteConfig,
) -> ContextBundle {
    match mode {
        ReaderMode::Triple => ContextBundle::new(mode, order_triples(chains), Vec::new()),
        ReaderMode::Doc => {
            let (voted, _unresolved) = vote_documents(chains, documents, vote_cfg);
            let titles = voted.iter().map(|d| d.title.clone()).collect();
            ContextBundle::new(mode, render_documents(&voted), titles)
        }
        ReaderMode::None => ContextBundle::new(mode, String::new(), Vec::new()),
        ReaderMode::AllDocs => {
            let refs: Vec<&Document> = documents.iter().collect();
            let titles = documents.iter().map(|d| d.title.clone()).collect();
            ContextBundle::new(mode, render_documents(&refs), titles)
        }
    }
}

/// Build a context bundle from an explicit ranked triple list, used by
/// the similarity-only baseline that skips chain construction.
pub fn build_top_triples_context(triples: &[crate::kg::KnowledgeTriple]) -> ContextBundle {
    let text = crate::kg::render_triples(triples);
    ContextBundle::new(ReaderMode::Triple, text, Vec::new())
}

/// Render the reader prompt for a context bundle.
pub fn build_reader_prompt(question: &str, bundle: &ContextBundle) -> String {
    if bundle.mode == ReaderMode::None {
        render(READER_TEMPLATE_NO_CONTEXT, &[("question", question)])
    } else {
        render(
            READER_TEMPLATE,
            &[("context", &bundle.context_text), ("question", question)],
        )
    }
}

/// Ask the reader for an answer given an assembled context.
pub fn answer(
    question: &str,
    question_id: &str,
    bundle: &ContextBundle,
    backend: &dyn ModelBackend,
) -> Result<Prediction> {
    let prompt = build_reader_prompt(question, bundle);
    let mut request = GenerationRequest::greedy(prompt, READER_MAX_TOKENS);
    request.stop = vec!["\n".to_string()];
    let raw = backend.generate(&request)?;
    Ok(Prediction {
        id: question_id.to_string(),
        answer: raw.trim().to_string(),
        mode: bundle.mode,
        context_tokens: bundle.token_count,
        voted_titles: bundle.voted_titles.clone(),
    })
}
