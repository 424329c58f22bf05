//! Autoregressive reasoning-chain construction.
//!
//! Chains are built by beam search over the question graph. Each live
//! hypothesis is extended one triple at a time: the ranker narrows the
//! graph to K candidates, the selector prices them (plus the termination
//! option) with one backend call, and the top-b triple options spawn new
//! hypotheses while the termination option closes the current one with
//! its probability folded into the score. Live and terminated hypotheses
//! compete in one pool, of which the best R survive each step.
//!
//! Because every step touches at most K candidates and the frontier never
//! exceeds R hypotheses, selector usage is bounded by L * R calls per
//! question regardless of graph size.

use serde::{Deserialize, Serialize};

use crate::backend::ModelBackend;
use crate::corpus::demos::DemoIndex;
use crate::error::{Result, TraceError};
use crate::kg::{render_triples, KnowledgeGraph, KnowledgeTriple};
use crate::ranker::RankerSession;
use crate::selector::{build_selection_prompt, triple_distribution, ChoiceTarget, SelectorMode};

/// Beam-search settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Maximum reasoning steps L.
    pub max_len: usize,
    /// Number of chains R kept in the beam and returned.
    pub num_chains: usize,
    /// Triple expansions b taken per live hypothesis per step.
    pub beam_width: usize,
    /// Candidates K offered to the selector each step.
    pub num_candidates: usize,
    /// Disable adaptive termination: chains run to exactly L triples
    /// unless the candidate pool runs dry first.
    pub fixed_length: bool,
    /// Remove already-selected triples from later candidate lists. Off,
    /// selected triples may reappear as candidates.
    pub exclude_selected: bool,
    /// Demonstrations retrieved per question for the selection prompt.
    pub num_demos: usize,
    pub selector_mode: SelectorMode,
    /// Override for the selection prompt template.
    #[serde(skip)]
    pub template: Option<String>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            max_len: 4,
            num_chains: 5,
            beam_width: 5,
            num_candidates: 20,
            fixed_length: false,
            exclude_selected: true,
            num_demos: 3,
            selector_mode: SelectorMode::Logits,
            template: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("max_len", self.max_len),
            ("num_chains", self.num_chains),
            ("beam_width", self.beam_width),
            ("num_candidates", self.num_candidates),
        ] {
            if value == 0 {
                return Err(TraceError::ConfigInvalid {
                    field: format!("chain.{name}"),
                    message: "must be >= 1".into(),
                });
            }
        }
        Ok(())
    }
}

/// One constructed reasoning chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReasoningChain {
    pub question_id: String,
    pub triples: Vec<KnowledgeTriple>,
    /// Option labels chosen per step; ends with "A" when the selector
    /// terminated the chain itself.
    pub labels: Vec<String>,
    /// Joint probability of the selections, in (0, 1].
    pub score: f64,
    pub terminated: bool,
}

impl ReasoningChain {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Render the chain as comma-separated triples.
    pub fn render(&self) -> String {
        render_triples(&self.triples)
    }
}

#[derive(Debug, Clone)]
struct Hypothesis {
    triple_indices: Vec<usize>,
    labels: Vec<String>,
    log_score: f64,
    terminated: bool,
}

impl Hypothesis {
    fn start() -> Self {
        Hypothesis {
            triple_indices: Vec::new(),
            labels: Vec::new(),
            log_score: 0.0,
            terminated: false,
        }
    }
}

/// Total order on hypotheses: score descending, then shorter chains,
/// then terminated before live, then lexicographic triple indices.
fn hypothesis_order(a: &Hypothesis, b: &Hypothesis) -> std::cmp::Ordering {
    b.log_score
        .total_cmp(&a.log_score)
        .then_with(|| a.triple_indices.len().cmp(&b.triple_indices.len()))
        .then_with(|| b.terminated.cmp(&a.terminated))
        .then_with(|| a.triple_indices.cmp(&b.triple_indices))
}

/// Collapse hypotheses with identical triple sequences, keeping the
/// higher-scoring one.
fn merge_duplicates(pool: Vec<Hypothesis>) -> Vec<Hypothesis> {
    let mut merged: Vec<Hypothesis> = Vec::with_capacity(pool.len());
    for hyp in pool {
        match merged
            .iter_mut()
            .find(|h| h.triple_indices == hyp.triple_indices && h.terminated == hyp.terminated)
        {
            Some(existing) => {
                if hyp.log_score > existing.log_score {
                    *existing = hyp;
                }
            }
            None => merged.push(hyp),
        }
    }
    merged
}

/// Construct up to R reasoning chains for one question.
///
/// Returns the surviving hypotheses, best first: chains the selector
/// terminated, chains force-terminated when candidates ran out, and
/// chains still live at the length horizon L. An empty graph yields a
/// single empty chain with score 1.
pub fn construct_chains(
    question: &str,
    question_id: &str,
    kg: &KnowledgeGraph,
    cfg: &ChainConfig,
    selector_backend: &dyn ModelBackend,
    embedder: &dyn ModelBackend,
    demos: &DemoIndex,
) -> Result<Vec<ReasoningChain>> {
    cfg.validate()?;
    let demo_texts = demos.select(question, cfg.num_demos, embedder)?;
    let mut session = RankerSession::new(embedder, kg)?;
    session.exclude_selected = cfg.exclude_selected;

    let mut frontier = vec![Hypothesis::start()];
    for _step in 1..=cfg.max_len {
        if frontier.iter().all(|h| h.terminated) {
            break;
        }
        let mut pool: Vec<Hypothesis> = Vec::new();
        for hyp in &frontier {
            if hyp.terminated {
                pool.push(hyp.clone());
                continue;
            }
            let candidates = session.rank(question, &hyp.triple_indices, cfg.num_candidates)?;
            if candidates.is_empty() {
                let mut done = hyp.clone();
                done.terminated = true;
                pool.push(done);
                continue;
            }
            let selected: Vec<KnowledgeTriple> = hyp
                .triple_indices
                .iter()
                .map(|&i| kg.triples()[i].clone())
                .collect();
            let prompt = build_selection_prompt(
                cfg.template.as_deref(),
                question,
                &selected,
                kg,
                &candidates,
                &demo_texts,
            );
            let probs = triple_distribution(&prompt, selector_backend, cfg.selector_mode)?;

            let mut expanded = 0;
            // Triple options in probability order, ties toward the
            // higher-ranked candidate.
            let mut triple_options: Vec<(usize, f64)> = (1..prompt.options.len())
                .map(|o| (o, probs[o]))
                .collect();
            triple_options.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for &(opt, p) in triple_options.iter().take(cfg.beam_width) {
                if p <= 0.0 {
                    continue;
                }
                let ChoiceTarget::Triple(triple_index) = prompt.options[opt].1 else {
                    continue;
                };
                let mut next = hyp.clone();
                next.triple_indices.push(triple_index);
                next.labels.push(prompt.options[opt].0.clone());
                next.log_score += p.ln();
                pool.push(next);
                expanded += 1;
            }
            // The termination option is always on the table in adaptive
            // mode; choosing it folds p(A) into the score.
            if !cfg.fixed_length && probs[0] > 0.0 {
                let mut done = hyp.clone();
                done.labels.push(prompt.options[0].0.clone());
                done.log_score += probs[0].ln();
                done.terminated = true;
                pool.push(done);
                expanded += 1;
            }
            if expanded == 0 {
                // Every option had zero probability (possible only in
                // degraded or fixed-length modes): force-terminate rather
                // than drop the hypothesis.
                let mut done = hyp.clone();
                done.terminated = true;
                pool.push(done);
            }
        }
        let mut pool = merge_duplicates(pool);
        pool.sort_by(hypothesis_order);
        pool.truncate(cfg.num_chains);
        frontier = pool;
    }

    frontier.sort_by(hypothesis_order);
    Ok(frontier
        .into_iter()
        .map(|h| ReasoningChain {
            question_id: question_id.to_string(),
            triples: h
                .triple_indices
                .iter()
                .map(|&i| kg.triples()[i].clone())
                .collect(),
            labels: h.labels,
            score: h.log_score.exp(),
            terminated: h.terminated,
        })
        .collect())
}
