//! End-to-end pipeline orchestration.
//!
//! One JSON config drives four stages: graph building, chain
//! construction, answering, and evaluation. Each stage reads the previous
//! stage's artifact and writes its own into the output directory; every
//! artifact opens with a meta line embedding the effective config and the
//! pipeline version, so a run can be reconstructed from its outputs.
//!
//! Stage artifacts:
//! - `kg_build.json`: cache/generator counters from graph building
//! - `chains.jsonl`: one record of reasoning chains per question
//! - `predictions.jsonl`: one answer record per question
//! - `report.json`: aggregate metrics
//! - `run_log.jsonl`: one line per backend call (stage, question, op,
//!   latency, outcome)

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backend::instrument::{LogSink, LoggingBackend};
use crate::backend::{HttpBackend, HttpBackendConfig, ModelBackend, ScriptedBackend};
use crate::chain::{construct_chains, ChainConfig, ReasoningChain};
use crate::corpus::cache::{doc_key, KgCache};
use crate::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use crate::corpus::{load_dataset, DatasetFormat, QAItem};
use crate::error::{Result, TraceError};
use crate::eval::{evaluate_run, EvalReport};
use crate::kg::{assemble_question_kg, KgGenConfig, KgGenerator};
use crate::ranker::top_t_triples;
use crate::reader::{
    answer as read_answer, build_context, build_top_triples_context, Prediction, ReaderMode,
    VoteConfig,
};

pub const PIPELINE_VERSION: &str = env!("CARGO_PKG_VERSION");

const KG_BUILD_FILE: &str = "kg_build.json";
const CHAINS_FILE: &str = "chains.jsonl";
const PREDICTIONS_FILE: &str = "predictions.jsonl";
const REPORT_FILE: &str = "report.json";
const RUN_LOG_FILE: &str = "run_log.jsonl";

/// Where one model role comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    /// An OpenAI-compatible HTTP endpoint.
    Http(HttpBackendConfig),
    /// A deterministic scripted backend loaded from a JSON file.
    Scripted { script: String },
}

/// The three model roles the pipeline needs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendsConfig {
    /// Text generation: triple extraction and answer reading.
    pub generator: BackendSpec,
    /// Option scoring for chain construction.
    pub selector: BackendSpec,
    /// Text embeddings: candidate ranking and demonstration retrieval.
    pub embedder: BackendSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub path: String,
    pub format: DatasetFormat,
}

/// Knowledge-graph generation settings exposed in the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KgStageConfig {
    pub num_demos: usize,
    pub max_tokens: u32,
}

impl Default for KgStageConfig {
    fn default() -> Self {
        KgStageConfig {
            num_demos: 3,
            max_tokens: 512,
        }
    }
}

/// How the reader gets its context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerMode {
    /// triple, doc, none, or all_docs.
    Simple(ReaderMode),
    /// Similarity-only baseline: the top T ranked triples as context,
    /// skipping chain construction.
    TopT { top_t: usize },
}

impl Default for AnswerMode {
    fn default() -> Self {
        AnswerMode::Simple(ReaderMode::Triple)
    }
}

/// File locations used by the stages. Relative paths are resolved
/// against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathsConfig {
    /// Append-only triple cache, shared across runs.
    pub kg_cache: String,
    /// Demonstration store for triple extraction; omit for zero-shot.
    #[serde(default)]
    pub kg_demos: Option<String>,
    /// Demonstration store for triple selection; omit for zero-shot.
    #[serde(default)]
    pub chain_demos: Option<String>,
    /// Plain-text override for the extraction prompt template.
    #[serde(default)]
    pub kg_template: Option<String>,
    /// Plain-text override for the selection prompt template.
    #[serde(default)]
    pub selection_template: Option<String>,
    /// Directory receiving all stage artifacts.
    pub output_dir: String,
}

/// The single configuration document driving a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub backends: BackendsConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub kg: KgStageConfig,
    #[serde(default)]
    pub mode: AnswerMode,
    #[serde(default)]
    pub vote: VoteConfig,
    pub paths: PathsConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub limit: Option<usize>,
}

fn default_workers() -> usize {
    1
}

/// A parsed config plus the raw JSON snapshot embedded in artifacts.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Parsed config with every path resolved to the config directory.
    pub config: RunConfig,
    /// The config document exactly as given (after overrides, before
    /// path resolution), stamped into artifact meta lines.
    pub snapshot: Value,
}

/// Set a dotted path inside a JSON document, creating intermediate
/// objects as needed. The raw value is parsed as JSON when possible and
/// falls back to a plain string.
pub fn apply_override(doc: &mut Value, path: &str, raw: &str) -> Result<()> {
    if path.is_empty() {
        return Err(TraceError::ConfigInvalid {
            field: "--set".into(),
            message: "empty override path".into(),
        });
    }
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        if !node.is_object() {
            *node = Value::Object(serde_json::Map::new());
        }
        node = node
            .as_object_mut()
            .unwrap()
            .entry(part.to_string())
            .or_insert(Value::Object(serde_json::Map::new()));
    }
    if !node.is_object() {
        *node = Value::Object(serde_json::Map::new());
    }
    node.as_object_mut()
        .unwrap()
        .insert(parts[parts.len() - 1].to_string(), parsed);
    Ok(())
}

fn resolve(base: &Path, p: &str) -> String {
    let path = Path::new(p);
    if path.is_absolute() {
        p.to_string()
    } else {
        base.join(path).display().to_string()
    }
}

fn resolve_paths(cfg: &mut RunConfig, base: &Path) {
    cfg.dataset.path = resolve(base, &cfg.dataset.path);
    for spec in [
        &mut cfg.backends.generator,
        &mut cfg.backends.selector,
        &mut cfg.backends.embedder,
    ] {
        if let BackendSpec::Scripted { script } = spec {
            *script = resolve(base, script);
        }
    }
    cfg.paths.kg_cache = resolve(base, &cfg.paths.kg_cache);
    cfg.paths.output_dir = resolve(base, &cfg.paths.output_dir);
    for opt in [
        &mut cfg.paths.kg_demos,
        &mut cfg.paths.chain_demos,
        &mut cfg.paths.kg_template,
        &mut cfg.paths.selection_template,
    ] {
        if let Some(p) = opt {
            *p = resolve(base, p);
        }
    }
}

fn validate_config(cfg: &RunConfig) -> Result<()> {
    cfg.chain.validate()?;
    if cfg.workers == 0 {
        return Err(TraceError::ConfigInvalid {
            field: "workers".into(),
            message: "must be >= 1".into(),
        });
    }
    if let AnswerMode::TopT { top_t } = cfg.mode {
        if top_t == 0 {
            return Err(TraceError::ConfigInvalid {
                field: "mode.top_t".into(),
                message: "must be >= 1".into(),
            });
        }
    }
    Ok(())
}

/// Load a run config from a JSON file and apply dotted-path overrides.
pub fn load_config(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| TraceError::io(path.display().to_string(), e))?;
    let mut doc: Value =
        serde_json::from_str(&text).map_err(|e| TraceError::json(path.display().to_string(), e))?;
    for (key, raw) in overrides {
        apply_override(&mut doc, key, raw)?;
    }
    let snapshot = doc.clone();
    let mut config: RunConfig =
        serde_json::from_value(doc).map_err(|e| TraceError::ConfigInvalid {
            field: path.display().to_string(),
            message: e.to_string(),
        })?;
    let base = path.parent().unwrap_or(Path::new("."));
    resolve_paths(&mut config, base);
    validate_config(&config)?;
    Ok(LoadedConfig { config, snapshot })
}

fn build_backend(spec: &BackendSpec) -> Result<Arc<dyn ModelBackend>> {
    match spec {
        BackendSpec::Http(cfg) => Ok(Arc::new(HttpBackend::new(cfg.clone())?)),
        BackendSpec::Scripted { script } => Ok(Arc::new(ScriptedBackend::from_path(script)?)),
    }
}

/// A named failure from one question; the run carries on past it.
#[derive(Debug, Clone, Serialize)]
pub struct QuestionFailure {
    pub id: String,
    pub error: String,
}

/// What a graph-building run did.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KgBuildSummary {
    pub questions: usize,
    pub documents: usize,
    pub cache_hits: usize,
    pub generator_calls: usize,
    pub triples: usize,
    pub parse_skips: usize,
    pub failures: usize,
}

/// Per-stage completion record for the non-evaluation stages.
#[derive(Debug)]
pub struct StageOutcome {
    pub processed: usize,
    pub failures: Vec<QuestionFailure>,
}

/// The self-description block stamped into every stage artifact.
fn meta_value(stage: &str, snapshot: &Value) -> Value {
    serde_json::json!({
        "pipeline_version": PIPELINE_VERSION,
        "stage": stage,
        "config": snapshot,
    })
}

/// First line of a JSONL artifact.
fn meta_line(stage: &str, snapshot: &Value) -> String {
    serde_json::to_string(&serde_json::json!({ "meta": meta_value(stage, snapshot) }))
        .expect("meta serialization cannot fail")
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| TraceError::io(path.display().to_string(), e))
}

/// Read a meta-headed JSONL artifact, returning its data records.
fn read_artifact_lines<T: DeserializeOwned>(path: &Path, stage: &str, hint: &str) -> Result<Vec<T>> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(TraceError::MissingArtifact {
                stage: stage.to_string(),
                path: path.display().to_string(),
                hint: hint.to_string(),
            });
        }
        Err(e) => return Err(TraceError::io(path.display().to_string(), e)),
    };
    let mut records = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(line).map_err(|e| TraceError::json(path.display().to_string(), e))?;
        if value.get("meta").is_some() {
            continue;
        }
        let record: T = serde_json::from_value(value)
            .map_err(|e| TraceError::json(path.display().to_string(), e))?;
        records.push(record);
    }
    Ok(records)
}

/// Map a fallible closure over items with a fixed-size thread pool.
/// Results come back in item order regardless of scheduling.
fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.min(items.len()).max(1);
    let mut slots: Vec<Option<R>> = Vec::with_capacity(items.len());
    slots.resize_with(items.len(), || None);
    if items.is_empty() {
        return Vec::new();
    }
    let slots = Mutex::new(slots);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let result = f(i, &items[i]);
                slots.lock().unwrap()[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("worker filled every slot"))
        .collect()
}

/// One question's chains as stored in `chains.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
struct ChainRecord {
    question_id: String,
    chains: Vec<ChainDump>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChainDump {
    triples: Vec<crate::kg::KnowledgeTriple>,
    labels: Vec<String>,
    score: f64,
    terminated: bool,
}

impl ChainRecord {
    fn from_chains(question_id: &str, chains: &[ReasoningChain]) -> Self {
        ChainRecord {
            question_id: question_id.to_string(),
            chains: chains
                .iter()
                .map(|c| ChainDump {
                    triples: c.triples.clone(),
                    labels: c.labels.clone(),
                    score: c.score,
                    terminated: c.terminated,
                })
                .collect(),
        }
    }

    fn into_chains(self) -> Vec<ReasoningChain> {
        let id = self.question_id;
        self.chains
            .into_iter()
            .map(|c| ReasoningChain {
                question_id: id.clone(),
                triples: c.triples,
                labels: c.labels,
                score: c.score,
                terminated: c.terminated,
            })
            .collect()
    }
}

/// A loaded config with constructed backends and an open run log,
/// ready to execute stages.
pub struct Pipeline {
    config: RunConfig,
    snapshot: Value,
    generator: Arc<dyn ModelBackend>,
    selector: Arc<dyn ModelBackend>,
    embedder: Arc<dyn ModelBackend>,
    log_sink: LogSink,
}

impl Pipeline {
    /// Build backends and open the run log. Creates the output
    /// directory; truncates any previous run log there.
    pub fn new(loaded: LoadedConfig) -> Result<Self> {
        let LoadedConfig { config, snapshot } = loaded;
        let out_dir = PathBuf::from(&config.paths.output_dir);
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| TraceError::io(out_dir.display().to_string(), e))?;
        let log_path = out_dir.join(RUN_LOG_FILE);
        let log_file = std::fs::File::create(&log_path)
            .map_err(|e| TraceError::io(log_path.display().to_string(), e))?;
        let log_sink: LogSink = Arc::new(Mutex::new(log_file));
        Ok(Pipeline {
            generator: build_backend(&config.backends.generator)?,
            selector: build_backend(&config.backends.selector)?,
            embedder: build_backend(&config.backends.embedder)?,
            config,
            snapshot,
            log_sink,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn out_path(&self, name: &str) -> PathBuf {
        Path::new(&self.config.paths.output_dir).join(name)
    }

    fn load_items(&self) -> Result<Vec<QAItem>> {
        let (mut items, report) =
            load_dataset(&self.config.dataset.path, self.config.dataset.format)?;
        if report.skipped > 0 {
            log::warn!(
                "dataset {}: skipped {} malformed items",
                self.config.dataset.path,
                report.skipped
            );
        }
        if let Some(limit) = self.config.limit {
            items.truncate(limit);
        }
        Ok(items)
    }

    fn open_cache(&self) -> Result<KgCache> {
        let path = Path::new(&self.config.paths.kg_cache);
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)
                    .map_err(|e| TraceError::io(parent.display().to_string(), e))?;
            }
        }
        KgCache::open(path)
    }

    fn demo_index(&self, path: &Option<String>, kind: DemoKind) -> Result<DemoIndex> {
        let store = match path {
            Some(p) => DemoStore::load(p, kind)?,
            None => DemoStore::empty(kind),
        };
        DemoIndex::build(store, &*self.embedder)
    }

    fn selection_template(&self) -> Result<Option<String>> {
        match &self.config.paths.selection_template {
            Some(p) => std::fs::read_to_string(p)
                .map(Some)
                .map_err(|e| TraceError::io(p.clone(), e)),
            None => Ok(None),
        }
    }

    fn kg_template(&self) -> Result<Option<String>> {
        match &self.config.paths.kg_template {
            Some(p) => std::fs::read_to_string(p)
                .map(Some)
                .map_err(|e| TraceError::io(p.clone(), e)),
            None => Ok(None),
        }
    }

    /// Stage 1: extract triples for every document of every question into
    /// the cache, skipping documents already cached.
    pub fn build_kg(&self) -> Result<KgBuildSummary> {
        let items = self.load_items()?;
        let cache = self.open_cache()?;
        let demos = self.demo_index(&self.config.paths.kg_demos, DemoKind::KgGeneration)?;
        let kg_cfg = KgGenConfig {
            template: self.kg_template()?,
            num_demos: self.config.kg.num_demos,
            max_tokens: self.config.kg.max_tokens,
        };

        let hits = AtomicUsize::new(0);
        let calls = AtomicUsize::new(0);
        let triples_total = AtomicUsize::new(0);
        let skips_total = AtomicUsize::new(0);
        let documents = AtomicUsize::new(0);

        let results: Vec<Result<()>> = parallel_map(&items, self.config.workers, |_, item| {
            let generator = LoggingBackend::new(
                Arc::clone(&self.generator),
                Arc::clone(&self.log_sink),
                "build_kg",
                item.id.clone(),
            );
            let embedder = LoggingBackend::new(
                Arc::clone(&self.embedder),
                Arc::clone(&self.log_sink),
                "build_kg",
                item.id.clone(),
            );
            let gen = KgGenerator::new(&generator, &embedder, &demos, kg_cfg.clone());
            for doc in &item.documents {
                documents.fetch_add(1, Ordering::Relaxed);
                let key = doc_key(doc);
                if let Some(cached) = cache.get(&key) {
                    hits.fetch_add(1, Ordering::Relaxed);
                    triples_total.fetch_add(cached.len(), Ordering::Relaxed);
                    continue;
                }
                let (triples, report) = gen.generate(doc)?;
                calls.fetch_add(1, Ordering::Relaxed);
                triples_total.fetch_add(triples.len(), Ordering::Relaxed);
                skips_total.fetch_add(report.skipped, Ordering::Relaxed);
                cache.put(doc, triples)?;
            }
            Ok(())
        });

        let failures = collect_failures(&items, results);
        let summary = KgBuildSummary {
            questions: items.len(),
            documents: documents.into_inner(),
            cache_hits: hits.into_inner(),
            generator_calls: calls.into_inner(),
            triples: triples_total.into_inner(),
            parse_skips: skips_total.into_inner(),
            failures: failures.len(),
        };
        #[derive(Serialize)]
        struct BuildArtifact<'a> {
            meta: Value,
            summary: &'a KgBuildSummary,
        }
        let artifact = BuildArtifact {
            meta: meta_value("build_kg", &self.snapshot),
            summary: &summary,
        };
        let path = self.out_path(KG_BUILD_FILE);
        write_text(
            &path,
            &format!(
                "{}\n",
                serde_json::to_string(&artifact).expect("summary serialization cannot fail")
            ),
        )?;
        log_failures("build_kg", &failures);
        Ok(summary)
    }

    /// Assemble the cached per-document triples for one question.
    fn question_graph(&self, cache: &KgCache, item: &QAItem) -> Result<crate::kg::KnowledgeGraph> {
        let mut per_doc = Vec::with_capacity(item.documents.len());
        for doc in &item.documents {
            let key = doc_key(doc);
            match cache.get(&key) {
                Some(triples) => per_doc.push(triples),
                None => {
                    return Err(TraceError::MissingArtifact {
                        stage: format!("question {}", item.id),
                        path: self.config.paths.kg_cache.clone(),
                        hint: "trace build-kg".into(),
                    });
                }
            }
        }
        Ok(assemble_question_kg(&per_doc))
    }

    /// Stage 2: beam-search reasoning chains for every question.
    pub fn construct_chains(&self) -> Result<StageOutcome> {
        let items = self.load_items()?;
        let cache = self.open_cache()?;
        let demos = self.demo_index(&self.config.paths.chain_demos, DemoKind::ChainConstruction)?;
        let mut chain_cfg = self.config.chain.clone();
        chain_cfg.template = self.selection_template()?;

        let results: Vec<Result<Vec<ReasoningChain>>> =
            parallel_map(&items, self.config.workers, |_, item| {
                let selector = LoggingBackend::new(
                    Arc::clone(&self.selector),
                    Arc::clone(&self.log_sink),
                    "construct_chains",
                    item.id.clone(),
                );
                let embedder = LoggingBackend::new(
                    Arc::clone(&self.embedder),
                    Arc::clone(&self.log_sink),
                    "construct_chains",
                    item.id.clone(),
                );
                let kg = self.question_graph(&cache, item)?;
                construct_chains(
                    &item.question,
                    &item.id,
                    &kg,
                    &chain_cfg,
                    &selector,
                    &embedder,
                    &demos,
                )
            });

        let mut lines = vec![meta_line("construct_chains", &self.snapshot)];
        let mut failures = Vec::new();
        let mut processed = 0usize;
        for (item, result) in items.iter().zip(results) {
            match result {
                Ok(chains) => {
                    let record = ChainRecord::from_chains(&item.id, &chains);
                    lines.push(
                        serde_json::to_string(&record).expect("chain serialization cannot fail"),
                    );
                    processed += 1;
                }
                Err(e) => failures.push(QuestionFailure {
                    id: item.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        write_text(&self.out_path(CHAINS_FILE), &(lines.join("\n") + "\n"))?;
        log_failures("construct_chains", &failures);
        Ok(StageOutcome {
            processed,
            failures,
        })
    }

    fn read_chain_records(&self) -> Result<HashMap<String, Vec<ReasoningChain>>> {
        let path = self.out_path(CHAINS_FILE);
        let records: Vec<ChainRecord> =
            read_artifact_lines(&path, "answer", "trace construct-chains")?;
        Ok(records
            .into_iter()
            .map(|r| (r.question_id.clone(), r.into_chains()))
            .collect())
    }

    /// Stage 3: generate an answer per question under the configured
    /// context mode.
    pub fn answer(&self) -> Result<StageOutcome> {
        let items = self.load_items()?;
        let mode = self.config.mode;
        let chains_by_id = match mode {
            AnswerMode::Simple(ReaderMode::Triple) | AnswerMode::Simple(ReaderMode::Doc) => {
                Some(self.read_chain_records()?)
            }
            _ => None,
        };
        let cache = match mode {
            AnswerMode::TopT { .. } => Some(self.open_cache()?),
            _ => None,
        };
        let vote_cfg = self.config.vote;

        let results: Vec<Result<Prediction>> =
            parallel_map(&items, self.config.workers, |_, item| {
                let reader = LoggingBackend::new(
                    Arc::clone(&self.generator),
                    Arc::clone(&self.log_sink),
                    "answer",
                    item.id.clone(),
                );
                let bundle = match mode {
                    AnswerMode::Simple(simple @ (ReaderMode::Triple | ReaderMode::Doc)) => {
                        let by_id = chains_by_id.as_ref().expect("chains loaded for this mode");
                        let chains = by_id.get(&item.id).ok_or_else(|| {
                            TraceError::MissingArtifact {
                                stage: format!("question {}", item.id),
                                path: self.out_path(CHAINS_FILE).display().to_string(),
                                hint: "trace construct-chains".into(),
                            }
                        })?;
                        build_context(simple, chains, &item.documents, vote_cfg)
                    }
                    AnswerMode::Simple(simple) => {
                        build_context(simple, &[], &item.documents, vote_cfg)
                    }
                    AnswerMode::TopT { top_t } => {
                        let embedder = LoggingBackend::new(
                            Arc::clone(&self.embedder),
                            Arc::clone(&self.log_sink),
                            "answer",
                            item.id.clone(),
                        );
                        let cache = cache.as_ref().expect("cache opened for this mode");
                        let kg = self.question_graph(cache, item)?;
                        let triples = top_t_triples(&item.question, &kg, top_t, &embedder)?;
                        build_top_triples_context(&triples)
                    }
                };
                read_answer(&item.question, &item.id, &bundle, &reader)
            });

        let mut lines = vec![meta_line("answer", &self.snapshot)];
        let mut failures = Vec::new();
        let mut processed = 0usize;
        for (item, result) in items.iter().zip(results) {
            match result {
                Ok(prediction) => {
                    lines.push(
                        serde_json::to_string(&prediction)
                            .expect("prediction serialization cannot fail"),
                    );
                    processed += 1;
                }
                Err(e) => failures.push(QuestionFailure {
                    id: item.id.clone(),
                    error: e.to_string(),
                }),
            }
        }
        write_text(&self.out_path(PREDICTIONS_FILE), &(lines.join("\n") + "\n"))?;
        log_failures("answer", &failures);
        Ok(StageOutcome {
            processed,
            failures,
        })
    }

    /// Stage 4: score predictions against the dataset and write the
    /// report artifact.
    pub fn evaluate(&self) -> Result<EvalReport> {
        let items = self.load_items()?;
        let predictions: Vec<Prediction> = read_artifact_lines(
            &self.out_path(PREDICTIONS_FILE),
            "evaluate",
            "trace answer",
        )?;
        let chains_path = self.out_path(CHAINS_FILE);
        let chains: Vec<ReasoningChain> = if chains_path.exists() {
            let records: Vec<ChainRecord> =
                read_artifact_lines(&chains_path, "evaluate", "trace construct-chains")?;
            records.into_iter().flat_map(|r| r.into_chains()).collect()
        } else {
            Vec::new()
        };
        let report = evaluate_run(&predictions, &items, &chains)?;

        #[derive(Serialize)]
        struct ReportArtifact<'a> {
            meta: Value,
            report: &'a EvalReport,
        }
        let artifact = ReportArtifact {
            meta: meta_value("evaluate", &self.snapshot),
            report: &report,
        };
        write_text(
            &self.out_path(REPORT_FILE),
            &format!(
                "{}\n",
                serde_json::to_string(&artifact).expect("report serialization cannot fail")
            ),
        )?;
        Ok(report)
    }

    /// All four stages in order.
    pub fn run_all(&self) -> Result<EvalReport> {
        self.build_kg()?;
        self.construct_chains()?;
        self.answer()?;
        self.evaluate()
    }
}

fn collect_failures(items: &[QAItem], results: Vec<Result<()>>) -> Vec<QuestionFailure> {
    items
        .iter()
        .zip(results)
        .filter_map(|(item, r)| {
            r.err().map(|e| QuestionFailure {
                id: item.id.clone(),
                error: e.to_string(),
            })
        })
        .collect()
}

fn log_failures(stage: &str, failures: &[QuestionFailure]) {
    for failure in failures {
        log::error!("{stage}: question {} failed: {}", failure.id, failure.error);
    }
}
