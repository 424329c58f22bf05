//! Question-local knowledge graphs.
//!
//! Each retrieved document is distilled into knowledge triples
//! `<title; relation; tail entity>` by a language model; the per-document
//! triples are then assembled into one graph for the question. Documents
//! about the same entity link through exact entity-name matches after
//! normalization, which is what lets a reasoning chain hop across
//! documents (a tail entity in one document is the title entity of
//! another).

mod graph;
mod prompt;

pub use graph::{assemble_question_kg, KgStats, KnowledgeGraph};
pub use prompt::{
    build_kg_prompt, generate_document_kg, KgGenConfig, KgGenerator, DEFAULT_KG_TEMPLATE,
    KG_INSTRUCTION,
};

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// A knowledge triple extracted from one document.
///
/// The head is the document title (title-as-entity), the tail is a phrase
/// from the text, and the relation describes how they connect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    /// Title of the document the triple was extracted from.
    pub source_title: String,
}

impl KnowledgeTriple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
        source_title: impl Into<String>,
    ) -> Self {
        KnowledgeTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            source_title: source_title.into(),
        }
    }

    /// Render as `<head; relation; tail>`.
    pub fn render(&self) -> String {
        format!("<{}; {}; {}>", self.head, self.relation, self.tail)
    }

    /// Key used for deduplication and entity linking.
    pub fn normalized_key(&self) -> (String, String, String) {
        (
            normalize_entity(&self.head),
            normalize_entity(&self.relation),
            normalize_entity(&self.tail),
        )
    }
}

/// Render triples as a comma-separated sequence, the form used inside
/// prompts and reasoning-chain contexts.
pub fn render_triples(triples: &[KnowledgeTriple]) -> String {
    triples
        .iter()
        .map(KnowledgeTriple::render)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Normalize an entity or relation for matching: lowercase, collapse
/// internal whitespace, strip surrounding punctuation.
pub fn normalize_entity(s: &str) -> String {
    let lowered = s.to_lowercase();
    let stripped = lowered.trim_matches(|c: char| c.is_whitespace() || is_strippable(c));
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn is_strippable(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '⟨' | '⟩' | '“' | '”' | '‘' | '’' | '«' | '»' | '—' | '–' | '…'
        )
}

/// Case- and whitespace-insensitive comparison used to snap parsed heads
/// back to the exact document title.
fn same_entity_loose(a: &str, b: &str) -> bool {
    let canon = |s: &str| s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    canon(a) == canon(b)
}

/// Counts from one [`parse_triples`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub parsed: usize,
    pub skipped: usize,
}

fn triple_group_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[⟨<][^⟨⟩<>]*[⟩>]").unwrap())
}

/// Parse model output into triples extracted for the document `title`.
///
/// Accepted forms: one `<head; relation; tail>` group per line, several
/// groups on a line separated by commas, Unicode or ASCII angle brackets,
/// and trailing commas. A group must have exactly three non-empty parts;
/// malformed fragments are skipped and counted. A parsed head that
/// differs from the document title only by case or whitespace is replaced
/// with the exact title; any other head is kept as parsed.
pub fn parse_triples(raw: &str, title: &str) -> (Vec<KnowledgeTriple>, ParseReport) {
    let re = triple_group_regex();
    let mut triples = Vec::new();
    let mut report = ParseReport::default();
    for line in raw.lines() {
        let mut groups = 0;
        for m in re.find_iter(line) {
            groups += 1;
            let inner = &line[m.start()..m.end()];
            let inner = &inner[inner
                .char_indices()
                .nth(1)
                .map(|(i, _)| i)
                .unwrap_or(inner.len())..];
            let inner = match inner.char_indices().last() {
                Some((i, _)) => &inner[..i],
                None => inner,
            };
            let parts: Vec<&str> = inner.split(';').map(str::trim).collect();
            if parts.len() != 3 || parts.iter().any(|p| p.is_empty()) {
                report.skipped += 1;
                continue;
            }
            let head = if same_entity_loose(parts[0], title) {
                title.to_string()
            } else {
                parts[0].to_string()
            };
            triples.push(KnowledgeTriple::new(head, parts[1], parts[2], title));
            report.parsed += 1;
        }
        if groups == 0 && line.contains(['⟨', '<', '⟩', '>', ';']) && !line.trim().is_empty() {
            report.skipped += 1;
        }
    }
    (triples, report)
}
