//! Persistent cache of per-document knowledge triples.
//!
//! Extraction is by far the most expensive stage, so generated triples
//! are cached on disk keyed by a hash of the document content. The file
//! is append-only JSON lines; reloading keeps the last record per key, so
//! regenerating a document simply appends a newer record.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Document;
use crate::error::{Result, TraceError};
use crate::kg::KnowledgeTriple;

/// Stable cache key for a document: a hash over title and text.
///
/// The two fields are hashed with a separator so documents sharing a
/// title but differing in text (or vice versa) get distinct keys.
pub fn doc_key(doc: &Document) -> String {
    let mut hasher = Sha256::new();
    hasher.update(doc.title.as_bytes());
    hasher.update([0x1f]);
    hasher.update(doc.text.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRecord {
    doc_key: String,
    title: String,
    triples: Vec<KnowledgeTriple>,
}

/// Append-only cache with an in-memory index.
///
/// Reads go through a shared lock on the index; writes serialize through
/// a single appender.
pub struct KgCache {
    path: PathBuf,
    index: RwLock<HashMap<String, Vec<KnowledgeTriple>>>,
    writer: Mutex<File>,
}

impl KgCache {
    /// Open or create the cache file at `path`.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut index = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| TraceError::io(path.display().to_string(), e))?;
            for (lineno, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| TraceError::io(path.display().to_string(), e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(record) => {
                        index.insert(record.doc_key, record.triples);
                    }
                    Err(e) => {
                        log::warn!(
                            "ignoring corrupt cache line {} in {}: {e}",
                            lineno + 1,
                            path.display()
                        );
                    }
                }
            }
        }
        let writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| TraceError::io(path.display().to_string(), e))?;
        Ok(KgCache {
            path,
            index: RwLock::new(index),
            writer: Mutex::new(writer),
        })
    }

    pub fn len(&self) -> usize {
        self.index.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<Vec<KnowledgeTriple>> {
        self.index.read().unwrap().get(key).cloned()
    }

    /// Record triples for a document, appending one JSON line.
    pub fn put(&self, doc: &Document, triples: Vec<KnowledgeTriple>) -> Result<()> {
        let record = CacheRecord {
            doc_key: doc_key(doc),
            title: doc.title.clone(),
            triples,
        };
        let line = serde_json::to_string(&record)
            .map_err(|e| TraceError::json(self.path.display().to_string(), e))?;
        {
            let mut writer = self.writer.lock().unwrap();
            writeln!(writer, "{line}")
                .map_err(|e| TraceError::io(self.path.display().to_string(), e))?;
        }
        self.index
            .write()
            .unwrap()
            .insert(record.doc_key, record.triples);
        Ok(())
    }

    /// Return cached triples for `doc`, generating and caching on a miss.
    pub fn get_or_generate<F>(&self, doc: &Document, generate: F) -> Result<Vec<KnowledgeTriple>>
    where
        F: FnOnce(&Document) -> Result<Vec<KnowledgeTriple>>,
    {
        let key = doc_key(doc);
        if let Some(hit) = self.get(&key) {
            return Ok(hit);
        }
        let triples = generate(doc)?;
        self.put(doc, triples.clone())?;
        Ok(triples)
    }
}
