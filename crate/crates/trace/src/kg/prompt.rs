//! Triple-extraction prompting.

use super::{parse_triples, KnowledgeTriple, ParseReport};
use crate::backend::{GenerationRequest, ModelBackend};
use crate::corpus::demos::DemoIndex;
use crate::corpus::Document;
use crate::error::Result;
use crate::template;

/// Instruction for extracting knowledge triples from a titled text.
pub const KG_INSTRUCTION: &str = "Given a title and a text, extract all the knowledge triples in the form of <title; relation; tail entity>, where title is the provided title, tail entity is a phrase in the text and relation denotes a description of the relation between the title and the tail entity.";

/// Default extraction prompt layout: instruction, demonstrations, then
/// the input document ending with the completion cue.
pub const DEFAULT_KG_TEMPLATE: &str = "{instruction}\n\n{demonstrations}Title: {title}\nText: {text}\nKnowledge Triples:";

/// Render the extraction prompt for one document.
///
/// Each demonstration is a fully rendered block; blocks are separated by
/// blank lines and precede the input document. With no demonstrations the
/// prompt is just the instruction and the input block.
pub fn build_kg_prompt(template_text: &str, doc: &Document, demos: &[String]) -> String {
    let mut rendered_demos = String::new();
    for demo in demos {
        rendered_demos.push_str(demo);
        rendered_demos.push_str("\n\n");
    }
    template::render(
        template_text,
        &[
            ("instruction", KG_INSTRUCTION),
            ("demonstrations", &rendered_demos),
            ("title", &doc.title),
            ("text", &doc.text),
        ],
    )
}

/// Settings for [`KgGenerator`].
#[derive(Debug, Clone)]
pub struct KgGenConfig {
    /// Prompt template; `None` uses [`DEFAULT_KG_TEMPLATE`].
    pub template: Option<String>,
    /// Demonstrations retrieved per document.
    pub num_demos: usize,
    pub max_tokens: u32,
}

impl Default for KgGenConfig {
    fn default() -> Self {
        KgGenConfig {
            template: None,
            num_demos: 3,
            max_tokens: 512,
        }
    }
}

/// Extracts knowledge triples from documents with a language model.
pub struct KgGenerator<'a> {
    backend: &'a dyn ModelBackend,
    embedder: &'a dyn ModelBackend,
    demos: &'a DemoIndex,
    config: KgGenConfig,
}

impl<'a> KgGenerator<'a> {
    pub fn new(
        backend: &'a dyn ModelBackend,
        embedder: &'a dyn ModelBackend,
        demos: &'a DemoIndex,
        config: KgGenConfig,
    ) -> Self {
        KgGenerator {
            backend,
            embedder,
            demos,
            config,
        }
    }

    /// Extract triples from one document.
    ///
    /// Demonstrations are the stored examples most similar to the
    /// document under the embedding inner product. Decoding is greedy and
    /// stops at the first blank line after the triple block.
    pub fn generate(&self, doc: &Document) -> Result<(Vec<KnowledgeTriple>, ParseReport)> {
        Ok(self.generate_with_prompt(doc)?.0)
    }

    /// As [`generate`](Self::generate), also returning the prompt used.
    pub fn generate_with_prompt(
        &self,
        doc: &Document,
    ) -> Result<((Vec<KnowledgeTriple>, ParseReport), String)> {
        let key_text = format!("{}\n{}", doc.title, doc.text);
        let demos = self.demos.select(&key_text, self.config.num_demos, self.embedder)?;
        let template_text = self
            .config
            .template
            .as_deref()
            .unwrap_or(DEFAULT_KG_TEMPLATE);
        let prompt = build_kg_prompt(template_text, doc, &demos);
        let mut req = GenerationRequest::greedy(prompt.clone(), self.config.max_tokens);
        req.stop = vec!["\n\n".to_string()];
        let raw = self.backend.generate(&req)?;
        Ok((parse_triples(&raw, &doc.title), prompt))
    }
}

/// Convenience wrapper: extract triples for `doc` with default settings.
pub fn generate_document_kg(
    doc: &Document,
    backend: &dyn ModelBackend,
    embedder: &dyn ModelBackend,
    demos: &DemoIndex,
) -> Result<(Vec<KnowledgeTriple>, ParseReport)> {
    KgGenerator::new(backend, embedder, demos, KgGenConfig::default()).generate(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::corpus::demos::{DemoEntry, DemoKind, DemoStore};

    fn plain_embedder() -> ScriptedBackend {
        ScriptedBackend::from_json(r#"{"embedding_dim": 4}"#).unwrap()
    }

    fn index_with(demos: &[(&str, &str)]) -> DemoIndex {
        let store = DemoStore {
            kind: DemoKind::KgGeneration,
            entries: demos
                .iter()
                .map(|(k, d)| DemoEntry {
                    key_text: k.to_string(),
                    demo_text: d.to_string(),
                })
                .collect(),
        };
        DemoIndex::build(store, &plain_embedder()).unwrap()
    }

    #[test]
    fn prompt_has_instruction_then_demos_then_input() {
        let doc = Document::new("Kelie McIver", "Kelie McIver is a Kansas-born actress.");
        let demo = "Title: Albert Einstein\nText: sample\nKnowledge Triples:\n<Albert Einstein; occupation; physicist>";
        let prompt = build_kg_prompt(DEFAULT_KG_TEMPLATE, &doc, &[demo.to_string()]);

        let instr = prompt.find(KG_INSTRUCTION).unwrap();
        let demo_pos = prompt.find("Title: Albert Einstein").unwrap();
        let input_pos = prompt.find("Title: Kelie McIver").unwrap();
        assert!(instr < demo_pos && demo_pos < input_pos);
        assert!(prompt.ends_with("Knowledge Triples:"));
        assert!(prompt.contains("Text: Kelie McIver is a Kansas-born actress."));
    }

    #[test]
    fn zero_demos_yields_instruction_plus_input_only() {
        let doc = Document::new("T", "x");
        let prompt = build_kg_prompt(DEFAULT_KG_TEMPLATE, &doc, &[]);
        assert_eq!(
            prompt,
            format!("{KG_INSTRUCTION}\n\nTitle: T\nText: x\nKnowledge Triples:")
        );
    }

    #[test]
    fn demo_braces_are_not_expanded() {
        let doc = Document::new("T", "x");
        let prompt = build_kg_prompt(DEFAULT_KG_TEMPLATE, &doc, &["has {title} inside".to_string()]);
        assert!(prompt.contains("has {title} inside"));
    }

    #[test]
    fn scripted_extraction_parses_the_full_triple_block() {
        let doc = Document::new(
            "Ellen Glasgow",
            "Ellen Anderson Gholson Glasgow (April 22, 1873 - November 21, 1945) was an American novelist who portrayed the changing world of the contemporary South.",
        );
        let backend = ScriptedBackend::from_json(
            r#"{"generations": [{
                "match": "Title: Ellen Glasgow",
                "response": "<Ellen Glasgow; full name; Ellen Anderson Gholson Glasgow>, <Ellen Glasgow; date of birth; April 22, 1873>, <Ellen Glasgow; date of death; November 21, 1945>, <Ellen Glasgow; occupation; novelist>, <Ellen Glasgow; nationality; American>, <Ellen Glasgow; the theme of her literary work; changing world of the contemporary South>\n\nTitle: leakage past the stop sequence"
            }]}"#,
        )
        .unwrap();
        let embedder = plain_embedder();
        let demos = index_with(&[]);
        let (triples, report) = generate_document_kg(&doc, &backend, &embedder, &demos).unwrap();
        assert_eq!(report, ParseReport { parsed: 6, skipped: 0 });
        assert_eq!(
            triples[0],
            KnowledgeTriple::new(
                "Ellen Glasgow",
                "full name",
                "Ellen Anderson Gholson Glasgow",
                "Ellen Glasgow"
            )
        );
        assert!(triples
            .iter()
            .any(|t| t.relation == "occupation" && t.tail == "novelist"));
    }

    #[test]
    fn demos_are_selected_by_document_similarity() {
        // Explicit vectors: the "close" demo aligns with the document key.
        let embedder = ScriptedBackend::from_json(
            r#"{"embedding_dim": 2, "embeddings": [
                {"match": "query: Target Doc", "vector": [1.0, 0.0]},
                {"match": "close key", "vector": [1.0, 0.0]},
                {"match": "far key", "vector": [0.0, 1.0]}
            ]}"#,
        )
        .unwrap();
        let store = DemoStore {
            kind: DemoKind::KgGeneration,
            entries: vec![
                DemoEntry {
                    key_text: "far key".into(),
                    demo_text: "FAR DEMO".into(),
                },
                DemoEntry {
                    key_text: "close key".into(),
                    demo_text: "CLOSE DEMO".into(),
                },
            ],
        };
        let demos = DemoIndex::build(store, &embedder).unwrap();
        let backend = ScriptedBackend::from_json(r#"{"generations": []}"#).unwrap();
        let generator = KgGenerator::new(
            &backend,
            &embedder,
            &demos,
            KgGenConfig {
                num_demos: 1,
                ..KgGenConfig::default()
            },
        );
        let doc = Document::new("Target Doc", "text");
        let (_, prompt) = generator.generate_with_prompt(&doc).unwrap();
        assert!(prompt.contains("CLOSE DEMO"));
        assert!(!prompt.contains("FAR DEMO"));
    }
}
