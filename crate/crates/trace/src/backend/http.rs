//! OpenAI-compatible HTTP backend.
//!
//! Talks to `/v1/chat/completions` for generation and option logits and
//! to `/v1/embeddings` for vectors. Option logits come from a one-token
//! completion with `top_logprobs` requested; labels outside the returned
//! top set are floored ten below the smallest returned log-probability so
//! every requested label still gets a value.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    apply_role_prefix, apply_stop_sequences, validate_embedding_batch,
    validate_single_token_labels, EmbeddingRequest, GenerationRequest, ModelBackend,
    OptionLogitRequest,
};
use crate::error::{Result, TraceError};

/// Environment variable consulted for the API key before the config value.
pub const API_KEY_ENV: &str = "TRACE_API_KEY";

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_in_flight() -> usize {
    4
}

fn default_max_attempts() -> u32 {
    3
}

fn default_initial_backoff_ms() -> u64 {
    500
}

fn default_query_prefix() -> String {
    "query: ".into()
}

/// Connection settings for an OpenAI-compatible server.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    /// Server root, with or without a trailing `/v1`.
    pub base_url: String,
    pub model: String,
    /// Model used for `/v1/embeddings`; defaults to `model`.
    #[serde(default)]
    pub embedding_model: Option<String>,
    /// Bearer token; the `TRACE_API_KEY` environment variable overrides it.
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Upper bound on concurrent requests through this backend.
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_query_prefix")]
    pub query_prefix: String,
    #[serde(default)]
    pub passage_prefix: String,
}

/// Counting gate bounding the number of in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(slots: usize) -> Self {
        Gate {
            free: Mutex::new(slots.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.free.lock().unwrap() += 1;
        self.gate.cv.notify_one();
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<LogprobBlock>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct LogprobBlock {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingDatum {
    index: usize,
    embedding: Vec<f64>,
}

/// A [`ModelBackend`] speaking the OpenAI-compatible protocol.
pub struct HttpBackend {
    cfg: HttpBackendConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl HttpBackend {
    pub fn new(cfg: HttpBackendConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| TraceError::InvalidRequest(format!("HTTP client: {e}")))?;
        let gate = Gate::new(cfg.max_in_flight);
        Ok(HttpBackend { cfg, client, gate })
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.cfg.api_key.clone())
    }

    fn endpoint(&self, path: &str) -> String {
        let mut base = self.cfg.base_url.trim_end_matches('/').to_string();
        if base.ends_with("/v1") {
            base.truncate(base.len() - 3);
            base = base.trim_end_matches('/').to_string();
        }
        format!("{base}/v1/{path}")
    }

    /// POST with retries on transport failures and 5xx statuses only.
    fn post(&self, path: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let url = self.endpoint(path);
        let mut backoff = Duration::from_millis(self.cfg.initial_backoff_ms);
        let attempts = self.cfg.max_attempts.max(1);
        let mut last_failure = String::new();
        for attempt in 1..=attempts {
            let _slot = self.gate.acquire();
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = self.api_key() {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| TraceError::MalformedResponse(e.to_string()));
                    }
                    if status.is_server_error() {
                        last_failure = format!("status {status}");
                    } else {
                        return Err(classify_client_error(status.as_u16(), &text));
                    }
                }
                Err(e) => last_failure = e.to_string(),
            }
            if attempt < attempts {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
        }
        Err(TraceError::Transport {
            attempts,
            message: last_failure,
        })
    }
}

/// Map a 4xx response, recognizing context-window rejections.
fn classify_client_error(status: u16, body: &str) -> TraceError {
    let lower = body.to_lowercase();
    if lower.contains("context length") || lower.contains("context_length") || lower.contains("maximum context") {
        let limit = extract_token_limit(&lower).unwrap_or_else(|| "server-reported".into());
        return TraceError::ContextLimit { limit };
    }
    TraceError::BackendStatus {
        status,
        message: body.chars().take(200).collect(),
    }
}

/// Pull a number followed by "tokens" out of an error body, if present.
fn extract_token_limit(body: &str) -> Option<String> {
    let idx = body.find("tokens")?;
    let head = &body[..idx];
    let digits: String = head
        .chars()
        .rev()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit())
        .collect();
    if digits.is_empty() {
        return None;
    }
    let n: String = digits.chars().rev().collect();
    Some(format!("{n} tokens"))
}

impl ModelBackend for HttpBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        let mut body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": req.max_tokens,
            "temperature": req.temperature,
        });
        if !req.stop.is_empty() {
            body["stop"] = json!(req.stop);
        }
        let value = self.post("chat/completions", &body)?;
        let resp: ChatResponse = serde_json::from_value(value)
            .map_err(|e| TraceError::MalformedResponse(e.to_string()))?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| TraceError::MalformedResponse("no choices in completion".into()))?;
        Ok(apply_stop_sequences(&content, &req.stop))
    }

    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        req.validate()?;
        validate_single_token_labels(&req.labels)?;
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": true,
            "top_logprobs": req.labels.len(),
        });
        let value = self.post("chat/completions", &body)?;
        let resp: ChatResponse = serde_json::from_value(value)
            .map_err(|e| TraceError::MalformedResponse(e.to_string()))?;
        let choice = resp
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| TraceError::MalformedResponse("no choices in completion".into()))?;
        let top = choice
            .logprobs
            .and_then(|lp| lp.content.into_iter().next())
            .map(|t| t.top_logprobs)
            .unwrap_or_default();
        if top.is_empty() {
            return Err(TraceError::LogitsUnavailable);
        }
        let floor = top.iter().map(|t| t.logprob).fold(f64::INFINITY, f64::min) - 10.0;
        let logits = req
            .labels
            .iter()
            .map(|label| {
                top.iter()
                    .find(|t| t.token.trim() == label.trim())
                    .map(|t| t.logprob)
                    .unwrap_or(floor)
            })
            .collect();
        Ok(logits)
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        req.validate()?;
        let inputs: Vec<String> = req
            .texts
            .iter()
            .map(|t| apply_role_prefix(&self.cfg.query_prefix, &self.cfg.passage_prefix, req.role, t))
            .collect();
        let model = self
            .cfg
            .embedding_model
            .clone()
            .unwrap_or_else(|| self.cfg.model.clone());
        let body = json!({"model": model, "input": inputs});
        let value = self.post("embeddings", &body)?;
        let resp: EmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| TraceError::MalformedResponse(e.to_string()))?;
        if resp.data.len() != req.texts.len() {
            return Err(TraceError::MalformedResponse(format!(
                "embedding count {} does not match input count {}",
                resp.data.len(),
                req.texts.len()
            )));
        }
        let mut data = resp.data;
        data.sort_by_key(|d| d.index);
        let vectors: Vec<Vec<f64>> = data.into_iter().map(|d| d.embedding).collect();
        validate_embedding_batch(&vectors)?;
        Ok(vectors)
    }
}
