//! Backend decorators for observability.
//!
//! [`CountingBackend`] tallies calls per operation, which the tests use to
//! assert call budgets (for example that a warm knowledge-graph cache
//! issues zero generator calls). [`LoggingBackend`] appends one JSON line
//! per call to a shared sink, tagged with pipeline stage and question id.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde_json::json;

use super::{EmbeddingRequest, GenerationRequest, ModelBackend, OptionLogitRequest};
use crate::error::Result;

/// Shared call tallies, one counter per backend operation.
#[derive(Debug, Default)]
pub struct CallCounts {
    pub generate: AtomicUsize,
    pub option_logits: AtomicUsize,
    pub embed_calls: AtomicUsize,
    pub embed_texts: AtomicUsize,
}

impl CallCounts {
    pub fn generate(&self) -> usize {
        self.generate.load(Ordering::Relaxed)
    }

    pub fn option_logits(&self) -> usize {
        self.option_logits.load(Ordering::Relaxed)
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::Relaxed)
    }

    pub fn embed_texts(&self) -> usize {
        self.embed_texts.load(Ordering::Relaxed)
    }
}

/// Pass-through backend that counts every call.
pub struct CountingBackend<B> {
    inner: B,
    counts: Arc<CallCounts>,
}

impl<B: ModelBackend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            counts: Arc::new(CallCounts::default()),
        }
    }

    pub fn counts(&self) -> Arc<CallCounts> {
        Arc::clone(&self.counts)
    }
}

impl<B: ModelBackend> ModelBackend for CountingBackend<B> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        self.counts.generate.fetch_add(1, Ordering::Relaxed);
        self.inner.generate(req)
    }

    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        self.counts.option_logits.fetch_add(1, Ordering::Relaxed);
        self.inner.option_logits(req)
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        self.counts.embed_calls.fetch_add(1, Ordering::Relaxed);
        self.counts
            .embed_texts
            .fetch_add(req.texts.len(), Ordering::Relaxed);
        self.inner.embed(req)
    }
}

/// Destination for structured call logs (JSON lines).
pub type LogSink = Arc<Mutex<dyn Write + Send>>;

/// Pass-through backend that appends one JSON line per call.
pub struct LoggingBackend<B> {
    inner: B,
    sink: LogSink,
    stage: String,
    question_id: String,
}

impl<B: ModelBackend> LoggingBackend<B> {
    pub fn new(inner: B, sink: LogSink, stage: impl Into<String>, question_id: impl Into<String>) -> Self {
        LoggingBackend {
            inner,
            sink,
            stage: stage.into(),
            question_id: question_id.into(),
        }
    }

    fn record(&self, op: &str, latency_ms: u128, ok: bool) {
        let line = json!({
            "stage": self.stage,
            "question_id": self.question_id,
            "op": op,
            "latency_ms": latency_ms,
            "ok": ok,
        });
        if let Ok(mut sink) = self.sink.lock() {
            let _ = writeln!(sink, "{line}");
        }
    }
}

impl<B: ModelBackend> ModelBackend for LoggingBackend<B> {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        let start = Instant::now();
        let out = self.inner.generate(req);
        self.record("generate", start.elapsed().as_millis(), out.is_ok());
        out
    }

    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        let start = Instant::now();
        let out = self.inner.option_logits(req);
        self.record("option_logits", start.elapsed().as_millis(), out.is_ok());
        out
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        let start = Instant::now();
        let out = self.inner.embed(req);
        self.record("embed", start.elapsed().as_millis(), out.is_ok());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{EmbeddingRole, ScriptedBackend};

    #[test]
    fn counts_track_each_operation() {
        let b = CountingBackend::new(ScriptedBackend::from_json("{}").unwrap());
        let counts = b.counts();
        b.generate(&GenerationRequest::greedy("p", 4)).unwrap();
        b.generate(&GenerationRequest::greedy("p", 4)).unwrap();
        b.embed(&EmbeddingRequest::new(
            vec!["a".into(), "b".into(), "c".into()],
            EmbeddingRole::Passage,
        ))
        .unwrap();
        assert_eq!(counts.generate(), 2);
        assert_eq!(counts.option_logits(), 0);
        assert_eq!(counts.embed_calls(), 1);
        assert_eq!(counts.embed_texts(), 3);
    }

    #[test]
    fn logging_backend_emits_one_line_per_call() {
        let buf: Arc<Mutex<Vec<u8>>> = Arc::new(Mutex::new(Vec::new()));

        struct SharedBuf(Arc<Mutex<Vec<u8>>>);
        impl Write for SharedBuf {
            fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
                self.0.lock().unwrap().extend_from_slice(data);
                Ok(data.len())
            }
            fn flush(&mut self) -> std::io::Result<()> {
                Ok(())
            }
        }

        let sink: LogSink = Arc::new(Mutex::new(SharedBuf(Arc::clone(&buf))));
        let b = LoggingBackend::new(
            ScriptedBackend::from_json("{}").unwrap(),
            sink,
            "kg_generation",
            "q1",
        );
        b.generate(&GenerationRequest::greedy("p", 4)).unwrap();
        let logged = String::from_utf8(buf.lock().unwrap().clone()).unwrap();
        let line: serde_json::Value = serde_json::from_str(logged.trim()).unwrap();
        assert_eq!(line["stage"], "kg_generation");
        assert_eq!(line["question_id"], "q1");
        assert_eq!(line["op"], "generate");
        assert_eq!(line["ok"], true);
    }
}
