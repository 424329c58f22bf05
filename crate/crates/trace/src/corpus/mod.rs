//! Datasets, demonstration stores, and the knowledge-graph cache.
//!
//! Multi-hop QA datasets arrive in three shapes (HotPotQA, 2WikiMultiHopQA,
//! MuSiQue); all are adapted into one [`QAItem`] form that keeps the
//! retrieved documents in their original order.

pub mod cache;
pub mod demos;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, TraceError};

/// A retrieved document: a title and its text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub title: String,
    pub text: String,
}

impl Document {
    pub fn new(title: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            title: title.into(),
            text: text.into(),
        }
    }
}

/// One question with its retrieved documents and gold answer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub answer: String,
    /// Retrieved documents in their original dataset order.
    pub documents: Vec<Document>,
    /// Titles of annotated supporting documents, when the dataset has them.
    #[serde(default)]
    pub supporting_titles: BTreeSet<String>,
}

/// Counts reported by [`load_dataset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LoadReport {
    pub loaded: usize,
    pub skipped: usize,
}

/// Supported dataset layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    /// HotPotQA distractor setting: 10 documents per question.
    Hotpotqa,
    /// 2WikiMultiHopQA: same record shape as HotPotQA.
    #[serde(alias = "2wikimultihopqa", alias = "2wiki")]
    Twowiki,
    /// MuSiQue: 20 paragraphs per question with `is_supporting` flags.
    Musique,
}

impl FromStr for DatasetFormat {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hotpotqa" => Ok(DatasetFormat::Hotpotqa),
            "twowiki" | "2wikimultihopqa" | "2wiki" => Ok(DatasetFormat::Twowiki),
            "musique" => Ok(DatasetFormat::Musique),
            other => Err(TraceError::UnknownFormat(other.into())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            DatasetFormat::Hotpotqa => "hotpotqa",
            DatasetFormat::Twowiki => "twowiki",
            DatasetFormat::Musique => "musique",
        };
        f.write_str(name)
    }
}

/// Load a dataset file, either a top-level JSON array or JSON lines.
///
/// Items missing a question or an answer are skipped with a logged
/// warning and counted in the report; document order is preserved.
pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<(Vec<QAItem>, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| TraceError::io(path.display().to_string(), e))?;
    let records = parse_records(path, &text)?;
    let mut items = Vec::new();
    let mut report = LoadReport::default();
    for (idx, record) in records.into_iter().enumerate() {
        match adapt_record(&record, format, idx) {
            Some(item) => {
                items.push(item);
                report.loaded += 1;
            }
            None => {
                log::warn!(
                    "skipping {} record {} (missing question or answer)",
                    format,
                    idx
                );
                report.skipped += 1;
            }
        }
    }
    Ok((items, report))
}

fn parse_records(path: &Path, text: &str) -> Result<Vec<Value>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(text)
            .map_err(|e| TraceError::json(path.display().to_string(), e))?;
        return Ok(values);
    }
    text.lines()
        .filter(|line| !line.trim().is_empty())
        .map(|line| {
            serde_json::from_str(line).map_err(|e| TraceError::json(path.display().to_string(), e))
        })
        .collect()
}

fn nonempty_str(value: &Value, key: &str) -> Option<String> {
    value.get(key)?.as_str().map(str::to_string).filter(|s| !s.is_empty())
}

fn adapt_record(record: &Value, format: DatasetFormat, idx: usize) -> Option<QAItem> {
    let question = nonempty_str(record, "question")?;
    let answer = nonempty_str(record, "answer")?;
    let id = nonempty_str(record, "_id")
        .or_else(|| nonempty_str(record, "id"))
        .unwrap_or_else(|| format!("item-{idx}"));
    let (documents, supporting_titles) = match format {
        DatasetFormat::Hotpotqa | DatasetFormat::Twowiki => adapt_context(record),
        DatasetFormat::Musique => adapt_paragraphs(record),
    };
    Some(QAItem {
        id,
        question,
        answer,
        documents,
        supporting_titles,
    })
}

/// HotPotQA-style `context` entries are `[title, [sentence, ...]]`;
/// sentences are joined with a single space.
fn adapt_context(record: &Value) -> (Vec<Document>, BTreeSet<String>) {
    let mut documents = Vec::new();
    if let Some(context) = record.get("context").and_then(Value::as_array) {
        for entry in context {
            let Some(pair) = entry.as_array() else { continue };
            let Some(title) = pair.first().and_then(Value::as_str) else {
                continue;
            };
            let sentences: Vec<&str> = pair
                .get(1)
                .and_then(Value::as_array)
                .map(|s| s.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            documents.push(Document::new(title, sentences.join(" ")));
        }
    }
    let mut supporting = BTreeSet::new();
    if let Some(facts) = record.get("supporting_facts").and_then(Value::as_array) {
        for fact in facts {
            if let Some(title) = fact.as_array().and_then(|f| f.first()).and_then(Value::as_str) {
                supporting.insert(title.to_string());
            }
        }
    }
    (documents, supporting)
}

/// MuSiQue paragraphs carry their own `is_supporting` annotation.
fn adapt_paragraphs(record: &Value) -> (Vec<Document>, BTreeSet<String>) {
    let mut documents = Vec::new();
    let mut supporting = BTreeSet::new();
    if let Some(paragraphs) = record.get("paragraphs").and_then(Value::as_array) {
        for p in paragraphs {
            let Some(title) = p.get("title").and_then(Value::as_str) else {
                continue;
            };
            let text = p
                .get("paragraph_text")
                .and_then(Value::as_str)
                .unwrap_or_default();
            if p.get("is_supporting").and_then(Value::as_bool) == Some(true) {
                supporting.insert(title.to_string());
            }
            documents.push(Document::new(title, text));
        }
    }
    (documents, supporting)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn hotpotqa_sentences_join_with_single_spaces() {
        let f = write_temp(
            r#"[{"_id": "q1", "question": "Q?", "answer": "A",
                 "context": [["T1", ["s1", "s2"]], ["T2", ["only"]]],
                 "supporting_facts": [["T1", 0], ["T1", 1]]}]"#,
        );
        let (items, report) = load_dataset(f.path(), DatasetFormat::Hotpotqa).unwrap();
        assert_eq!(report, LoadReport { loaded: 1, skipped: 0 });
        let item = &items[0];
        assert_eq!(item.id, "q1");
        assert_eq!(item.documents[0], Document::new("T1", "s1 s2"));
        assert_eq!(item.documents[1], Document::new("T2", "only"));
        assert_eq!(
            item.supporting_titles,
            BTreeSet::from(["T1".to_string()])
        );
    }

    #[test]
    fn items_missing_question_or_answer_are_skipped_and_counted() {
        let f = write_temp(
            r#"[{"_id": "a", "question": "Q?", "answer": "A", "context": []},
                {"_id": "b", "answer": "A", "context": []},
                {"_id": "c", "question": "Q?", "context": []}]"#,
        );
        let (items, report) = load_dataset(f.path(), DatasetFormat::Hotpotqa).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(report, LoadReport { loaded: 1, skipped: 2 });
    }

    #[test]
    fn json_lines_files_are_accepted() {
        let f = write_temp(concat!(
            r#"{"id": "m1", "question": "Q?", "answer": "A", "paragraphs": [{"title": "P", "paragraph_text": "body", "is_supporting": true}]}"#,
            "\n",
            r#"{"id": "m2", "question": "Q2?", "answer": "B", "paragraphs": []}"#,
            "\n"
        ));
        let (items, report) = load_dataset(f.path(), DatasetFormat::Musique).unwrap();
        assert_eq!(report.loaded, 2);
        assert_eq!(items[0].documents, vec![Document::new("P", "body")]);
        assert_eq!(
            items[0].supporting_titles,
            BTreeSet::from(["P".to_string()])
        );
        assert!(items[1].supporting_titles.is_empty());
    }

    #[test]
    fn document_order_is_preserved() {
        let f = write_temp(
            r#"[{"_id": "q", "question": "Q?", "answer": "A",
                 "context": [["C", ["1"]], ["A", ["2"]], ["B", ["3"]]]}]"#,
        );
        let (items, _) = load_dataset(f.path(), DatasetFormat::Hotpotqa).unwrap();
        let titles: Vec<&str> = items[0].documents.iter().map(|d| d.title.as_str()).collect();
        assert_eq!(titles, vec!["C", "A", "B"]);
    }

    #[test]
    fn missing_ids_are_synthesized_from_position() {
        let f = write_temp(r#"[{"question": "Q?", "answer": "A", "context": []}]"#);
        let (items, _) = load_dataset(f.path(), DatasetFormat::Hotpotqa).unwrap();
        assert_eq!(items[0].id, "item-0");
    }

    #[test]
    fn format_names_parse() {
        assert_eq!("hotpotqa".parse::<DatasetFormat>().unwrap(), DatasetFormat::Hotpotqa);
        assert_eq!("2wikimultihopqa".parse::<DatasetFormat>().unwrap(), DatasetFormat::Twowiki);
        assert_eq!("musique".parse::<DatasetFormat>().unwrap(), DatasetFormat::Musique);
        assert!("squad".parse::<DatasetFormat>().is_err());
    }
}
