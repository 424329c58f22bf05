//! Deterministic backend driven by a JSON script.
//!
//! A script maps prompt substrings to canned outputs, which makes every
//! pipeline stage reproducible without a model server. Unmatched
//! embeddings fall back to a hash-seeded pseudo-random unit vector, so
//! any text embeds to a stable vector even without an explicit rule.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::{
    apply_role_prefix, apply_stop_sequences, validate_embedding_batch,
    validate_single_token_labels, EmbeddingRequest, GenerationRequest, ModelBackend,
    OptionLogitRequest,
};
use crate::error::{Result, TraceError};

/// One or several substrings that must all occur in the prompt.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum MatchSpec {
    One(String),
    All(Vec<String>),
}

impl MatchSpec {
    fn matches(&self, text: &str) -> bool {
        match self {
            MatchSpec::One(s) => text.contains(s.as_str()),
            MatchSpec::All(parts) => parts.iter().all(|s| text.contains(s.as_str())),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct GenerationRule {
    #[serde(rename = "match")]
    matcher: MatchSpec,
    response: String,
}

#[derive(Debug, Clone, Deserialize)]
struct OptionLogitRule {
    #[serde(rename = "match")]
    matcher: MatchSpec,
    logits: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Deserialize)]
struct EmbeddingRule {
    #[serde(rename = "match")]
    matcher: MatchSpec,
    vector: Vec<f64>,
}

fn default_embedding_dim() -> usize {
    16
}

fn default_query_prefix() -> String {
    "query: ".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Script {
    #[serde(default)]
    generations: Vec<GenerationRule>,
    #[serde(default)]
    option_logits: Vec<OptionLogitRule>,
    #[serde(default)]
    embeddings: Vec<EmbeddingRule>,
    /// In strict mode an uncovered request is an error instead of a default.
    #[serde(default)]
    strict: bool,
    /// Dimension of fallback embeddings; explicit vectors must match it.
    #[serde(default = "default_embedding_dim")]
    embedding_dim: usize,
    /// Optional prompt length limit in characters, for exercising the
    /// context-limit error path.
    #[serde(default)]
    context_limit: Option<usize>,
    #[serde(default = "default_query_prefix")]
    query_prefix: String,
    #[serde(default)]
    passage_prefix: String,
}

/// A [`ModelBackend`] that replays a scripted table of responses.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
}

impl ScriptedBackend {
    /// Load a script from a JSON file.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| TraceError::io(path.display().to_string(), e))?;
        Self::from_json(&text).map_err(|e| TraceError::InvalidScript {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    /// Parse a script from a JSON string.
    pub fn from_json(json: &str) -> Result<Self> {
        let script: Script = serde_json::from_str(json).map_err(|e| TraceError::InvalidScript {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        if script.embedding_dim == 0 {
            return Err(TraceError::InvalidScript {
                path: "<inline>".into(),
                message: "embedding_dim must be >= 1".into(),
            });
        }
        for rule in &script.embeddings {
            if rule.vector.len() != script.embedding_dim {
                return Err(TraceError::InvalidScript {
                    path: "<inline>".into(),
                    message: format!(
                        "embedding rule vector has dimension {}, script declares {}",
                        rule.vector.len(),
                        script.embedding_dim
                    ),
                });
            }
        }
        Ok(ScriptedBackend { script })
    }

    fn check_context(&self, prompt: &str) -> Result<()> {
        if let Some(limit) = self.script.context_limit {
            if prompt.chars().count() > limit {
                return Err(TraceError::ContextLimit {
                    limit: format!("{limit} characters"),
                });
            }
        }
        Ok(())
    }

    /// Deterministic unit vector derived from the text content alone.
    fn fallback_vector(&self, text: &str) -> Vec<f64> {
        let digest = Sha256::digest(text.as_bytes());
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(seed);
        let mut v: Vec<f64> = (0..self.script.embedding_dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        } else {
            v[0] = 1.0;
        }
        v
    }

    fn preview(text: &str) -> String {
        let flat: String = text.chars().take(80).collect();
        flat.replace('\n', "\\n")
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(&self, req: &GenerationRequest) -> Result<String> {
        req.validate()?;
        self.check_context(&req.prompt)?;
        match self
            .script
            .generations
            .iter()
            .find(|r| r.matcher.matches(&req.prompt))
        {
            Some(rule) => Ok(apply_stop_sequences(&rule.response, &req.stop)),
            None if self.script.strict => Err(TraceError::NoScriptedResponse(format!(
                "generation for prompt starting {:?}",
                Self::preview(&req.prompt)
            ))),
            None => Ok(String::new()),
        }
    }

    fn option_logits(&self, req: &OptionLogitRequest) -> Result<Vec<f64>> {
        req.validate()?;
        validate_single_token_labels(&req.labels)?;
        self.check_context(&req.prompt)?;
        let rule = self
            .script
            .option_logits
            .iter()
            .find(|r| r.matcher.matches(&req.prompt));
        let Some(rule) = rule else {
            if self.script.strict {
                return Err(TraceError::NoScriptedResponse(format!(
                    "option logits for prompt starting {:?}",
                    Self::preview(&req.prompt)
                )));
            }
            return Ok(vec![0.0; req.labels.len()]);
        };
        let floor = rule
            .logits
            .values()
            .copied()
            .fold(f64::INFINITY, f64::min);
        req.labels
            .iter()
            .map(|label| match rule.logits.get(label) {
                Some(&v) => Ok(v),
                None if self.script.strict => Err(TraceError::NoScriptedResponse(format!(
                    "logit for label {label:?}"
                ))),
                // Unscripted labels sit well below every scripted one, the
                // same convention the HTTP backend uses for labels outside
                // the returned top set.
                None if floor.is_finite() => Ok(floor - 10.0),
                None => Ok(0.0),
            })
            .collect()
    }

    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<Vec<f64>>> {
        req.validate()?;
        let vectors: Vec<Vec<f64>> = req
            .texts
            .iter()
            .map(|text| {
                let prefixed = apply_role_prefix(
                    &self.script.query_prefix,
                    &self.script.passage_prefix,
                    req.role,
                    text,
                );
                match self
                    .script
                    .embeddings
                    .iter()
                    .find(|r| r.matcher.matches(&prefixed))
                {
                    Some(rule) => Ok(rule.vector.clone()),
                    None if self.script.strict => Err(TraceError::NoScriptedResponse(format!(
                        "embedding for text starting {:?}",
                        Self::preview(&prefixed)
                    ))),
                    None => Ok(self.fallback_vector(&prefixed)),
                }
            })
            .collect::<Result<_>>()?;
        validate_embedding_batch(&vectors)?;
        Ok(vectors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::EmbeddingRole;

    fn backend(json: &str) -> ScriptedBackend {
        ScriptedBackend::from_json(json).unwrap()
    }

    #[test]
    fn first_matching_generation_rule_wins() {
        let b = backend(
            r#"{"generations": [
                {"match": "alpha", "response": "first"},
                {"match": "alp", "response": "second"}
            ]}"#,
        );
        let out = b.generate(&GenerationRequest::greedy("say alpha", 16)).unwrap();
        assert_eq!(out, "first");
    }

    #[test]
    fn conjunctive_match_requires_every_substring() {
        let b = backend(
            r#"{"generations": [
                {"match": ["the correct answer is", "Hermann Einstein"], "response": "3 July 1814"}
            ], "strict": true}"#,
        );
        let hit = b
            .generate(&GenerationRequest::greedy(
                "context: Hermann Einstein ...\nthe correct answer is:",
                16,
            ))
            .unwrap();
        assert_eq!(hit, "3 July 1814");
        let miss = b.generate(&GenerationRequest::greedy("the correct answer is:", 16));
        assert!(matches!(miss, Err(TraceError::NoScriptedResponse(_))));
    }

    #[test]
    fn unmatched_generation_returns_empty_unless_strict() {
        let b = backend(r#"{"generations": []}"#);
        assert_eq!(b.generate(&GenerationRequest::greedy("x", 4)).unwrap(), "");
    }

    #[test]
    fn generation_applies_stop_sequences() {
        let b = backend(r#"{"generations": [{"match": "q", "response": "line one\n\nline two"}]}"#);
        let mut req = GenerationRequest::greedy("q", 64);
        req.stop = vec!["\n\n".into()];
        assert_eq!(b.generate(&req).unwrap(), "line one");
    }

    #[test]
    fn option_logits_cover_every_label_in_order() {
        let b = backend(
            r#"{"option_logits": [{"match": "pick", "logits": {"A": 1.0, "B": 2.0, "C": -1.0}}]}"#,
        );
        let req = OptionLogitRequest {
            prompt: "pick one".into(),
            labels: vec!["B".into(), "A".into(), "C".into()],
        };
        assert_eq!(b.option_logits(&req).unwrap(), vec![2.0, 1.0, -1.0]);
    }

    #[test]
    fn strict_mode_errors_on_missing_label() {
        let b = backend(
            r#"{"option_logits": [{"match": "pick", "logits": {"A": 1.0, "B": 2.0}}], "strict": true}"#,
        );
        let req = OptionLogitRequest {
            prompt: "pick one".into(),
            labels: vec!["A".into(), "B".into(), "C".into()],
        };
        assert!(matches!(
            b.option_logits(&req),
            Err(TraceError::NoScriptedResponse(_))
        ));
    }

    #[test]
    fn lenient_mode_floors_missing_labels() {
        let b = backend(
            r#"{"option_logits": [{"match": "pick", "logits": {"A": 1.0, "B": 2.0}}]}"#,
        );
        let req = OptionLogitRequest {
            prompt: "pick one".into(),
            labels: vec!["A".into(), "C".into()],
        };
        assert_eq!(b.option_logits(&req).unwrap(), vec![1.0, -9.0]);
    }

    #[test]
    fn scripted_embeddings_apply_role_prefixes() {
        let b = backend(
            r#"{"embeddings": [
                {"match": "query: q1", "vector": [1.0, 0.0]},
                {"match": "t1", "vector": [0.5, 0.5]}
            ], "embedding_dim": 2}"#,
        );
        let out = b
            .embed(&EmbeddingRequest::new(vec!["q1".into()], EmbeddingRole::Query))
            .unwrap();
        assert_eq!(out, vec![vec![1.0, 0.0]]);
        let out = b
            .embed(&EmbeddingRequest::new(vec!["t1".into()], EmbeddingRole::Passage))
            .unwrap();
        assert_eq!(out, vec![vec![0.5, 0.5]]);
    }

    #[test]
    fn fallback_embeddings_are_deterministic_unit_vectors() {
        let b = backend(r#"{"embedding_dim": 8}"#);
        let req = EmbeddingRequest::new(vec!["anything".into()], EmbeddingRole::Passage);
        let a = b.embed(&req).unwrap();
        let again = b.embed(&req).unwrap();
        assert_eq!(a, again);
        let norm: f64 = a[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let other = b
            .embed(&EmbeddingRequest::new(
                vec!["anything else".into()],
                EmbeddingRole::Passage,
            ))
            .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn script_rejects_vectors_off_dimension() {
        let err = ScriptedBackend::from_json(
            r#"{"embeddings": [{"match": "x", "vector": [1.0]}], "embedding_dim": 2}"#,
        )
        .unwrap_err();
        assert!(matches!(err, TraceError::InvalidScript { .. }));
    }

    #[test]
    fn context_limit_is_enforced() {
        let b = backend(r#"{"context_limit": 5}"#);
        let err = b
            .generate(&GenerationRequest::greedy("too long a prompt", 4))
            .unwrap_err();
        assert!(matches!(err, TraceError::ContextLimit { .. }));
    }

    #[test]
    fn unknown_script_fields_are_rejected() {
        assert!(ScriptedBackend::from_json(r#"{"generation": []}"#).is_err());
    }
}
