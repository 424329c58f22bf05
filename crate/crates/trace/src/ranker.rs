//! Embedding-based candidate ranking.
//!
//! At each reasoning step the current state (question plus the triples
//! selected so far) is embedded as a query and scored against every
//! triple in the question graph by raw inner product. The top K triples
//! become the candidate list offered to the selector. Triple embeddings
//! are computed once per question and reused across beam-search steps;
//! only the query side is re-embedded as the chain grows.

use serde::{Deserialize, Serialize};

use crate::backend::{EmbeddingRequest, EmbeddingRole, ModelBackend};
use crate::error::{Result, TraceError};
use crate::kg::{KnowledgeGraph, KnowledgeTriple};

/// One ranked candidate: a triple index into the graph and its score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub triple_index: usize,
    pub score: f64,
}

/// Query text for a partial reasoning state: the question followed by
/// each selected triple, all separated by single spaces.
pub fn format_query(question: &str, selected: &[KnowledgeTriple]) -> String {
    let mut query = question.to_string();
    for triple in selected {
        query.push(' ');
        query.push_str(&triple.render());
    }
    query
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-question ranking state holding the cached triple embeddings.
pub struct RankerSession<'a> {
    embedder: &'a dyn ModelBackend,
    kg: &'a KnowledgeGraph,
    triple_vectors: Vec<Vec<f64>>,
    /// When set (the default), triples already in the chain are removed
    /// from the candidate list; clearing it restores the behaviour where
    /// selected triples may reappear as candidates.
    pub exclude_selected: bool,
}

impl<'a> RankerSession<'a> {
    /// Embed every triple in the graph (one batch) and keep the vectors.
    pub fn new(embedder: &'a dyn ModelBackend, kg: &'a KnowledgeGraph) -> Result<Self> {
        let triple_vectors = if kg.is_empty() {
            Vec::new()
        } else {
            let texts = kg.triples().iter().map(KnowledgeTriple::render).collect();
            embedder.embed(&EmbeddingRequest::new(texts, EmbeddingRole::Passage))?
        };
        Ok(RankerSession {
            embedder,
            kg,
            triple_vectors,
            exclude_selected: true,
        })
    }

    /// Rank candidates for the state `(question, selected)`.
    ///
    /// Returns at most `k` triple indices with scores, highest inner
    /// product first, ties broken toward the lower triple index. An empty
    /// graph yields an empty list, which tells the chain constructor to
    /// terminate the hypothesis.
    pub fn rank(&self, question: &str, selected: &[usize], k: usize) -> Result<Vec<RankedCandidate>> {
        if k == 0 {
            return Err(TraceError::InvalidRequest(
                "candidate count K must be >= 1".into(),
            ));
        }
        if self.kg.is_empty() {
            return Ok(Vec::new());
        }
        let selected_triples: Vec<KnowledgeTriple> = selected
            .iter()
            .filter_map(|&i| self.kg.triples().get(i).cloned())
            .collect();
        let query_text = format_query(question, &selected_triples);
        let query = self
            .embedder
            .embed(&EmbeddingRequest::new(
                vec![query_text],
                EmbeddingRole::Query,
            ))?
            .remove(0);

        let mut scored: Vec<RankedCandidate> = self
            .triple_vectors
            .iter()
            .enumerate()
            .filter(|(i, _)| !(self.exclude_selected && selected.contains(i)))
            .map(|(i, v)| RankedCandidate {
                triple_index: i,
                score: dot(&query, v),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.triple_index.cmp(&b.triple_index))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

/// One-shot ranking without a reusable session.
pub fn rank_candidates(
    question: &str,
    selected: &[usize],
    kg: &KnowledgeGraph,
    k: usize,
    embedder: &dyn ModelBackend,
) -> Result<Vec<RankedCandidate>> {
    RankerSession::new(embedder, kg)?.rank(question, selected, k)
}

/// The `t` triples most similar to the bare question, in rank order.
///
/// This is the retrieval-only ablation: ranked triples used directly as
/// reader context with no chain construction.
pub fn top_t_triples(
    question: &str,
    kg: &KnowledgeGraph,
    t: usize,
    embedder: &dyn ModelBackend,
) -> Result<Vec<KnowledgeTriple>> {
    let ranked = rank_candidates(question, &[], kg, t, embedder)?;
    Ok(ranked
        .into_iter()
        .map(|c| kg.triples()[c.triple_index].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::instrument::CountingBackend;
    use crate::backend::ScriptedBackend;
    use proptest::prelude::*;

    fn t(head: &str, relation: &str, tail: &str) -> KnowledgeTriple {
        KnowledgeTriple::new(head, relation, tail, head)
    }

    fn fallback_embedder(dim: usize) -> ScriptedBackend {
        ScriptedBackend::from_json(&format!(r#"{{"embedding_dim": {dim}}}"#)).unwrap()
    }

    #[test]
    fn query_is_question_then_selected_triples_space_separated() {
        assert_eq!(format_query("q", &[]), "q");
        let selected = vec![t("h1", "r1", "e1"), t("h2", "r2", "e2")];
        assert_eq!(
            format_query("q", &selected),
            "q <h1; r1; e1> <h2; r2; e2>"
        );
    }

    #[test]
    fn ranking_orders_by_inner_product_with_index_ties() {
        let embedder = ScriptedBackend::from_json(
            r#"{"embedding_dim": 2, "embeddings": [
                {"match": "query: q", "vector": [1.0, 0.0]},
                {"match": "low", "vector": [0.1, 0.0]},
                {"match": "tied", "vector": [0.5, 0.0]},
                {"match": "high", "vector": [0.9, 0.0]}
            ]}"#,
        )
        .unwrap();
        let kg = KnowledgeGraph::from_triples(vec![
            t("a", "is", "tied one"),
            t("b", "is", "low"),
            t("c", "is", "tied two"),
            t("d", "is", "high"),
        ]);
        let ranked = rank_candidates("q", &[], &kg, 4, &embedder).unwrap();
        let order: Vec<usize> = ranked.iter().map(|c| c.triple_index).collect();
        assert_eq!(order, vec![3, 0, 2, 1]);
        assert_eq!(ranked[0].score, 0.9);
        assert_eq!(ranked[1].score, 0.5);
    }

    #[test]
    fn selected_triples_are_excluded_unless_configured_otherwise() {
        let embedder = fallback_embedder(4);
        let kg = KnowledgeGraph::from_triples(vec![
            t("a", "r", "x"),
            t("b", "r", "y"),
            t("c", "r", "z"),
        ]);
        let session = RankerSession::new(&embedder, &kg).unwrap();
        let ranked = session.rank("q", &[1], 3).unwrap();
        assert!(ranked.iter().all(|c| c.triple_index != 1));
        assert_eq!(ranked.len(), 2);

        let mut literal = RankerSession::new(&embedder, &kg).unwrap();
        literal.exclude_selected = false;
        let ranked = literal.rank("q", &[1], 3).unwrap();
        assert!(ranked.iter().any(|c| c.triple_index == 1));
    }

    #[test]
    fn oversized_k_returns_everything_and_zero_k_errors() {
        let embedder = fallback_embedder(4);
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x"), t("b", "r", "y")]);
        assert_eq!(rank_candidates("q", &[], &kg, 10, &embedder).unwrap().len(), 2);
        assert!(rank_candidates("q", &[], &kg, 0, &embedder).is_err());
    }

    #[test]
    fn empty_graph_returns_no_candidates() {
        let embedder = fallback_embedder(4);
        let kg = KnowledgeGraph::from_triples(vec![]);
        assert!(rank_candidates("q", &[], &kg, 5, &embedder).unwrap().is_empty());
    }

    #[test]
    fn triple_embeddings_are_computed_once_per_session() {
        let embedder = CountingBackend::new(fallback_embedder(4));
        let counts = embedder.counts();
        let kg = KnowledgeGraph::from_triples(vec![
            t("a", "r", "x"),
            t("b", "r", "y"),
            t("c", "r", "z"),
        ]);
        let session = RankerSession::new(&embedder, &kg).unwrap();
        assert_eq!(counts.embed_texts(), 3);
        session.rank("q", &[], 3).unwrap();
        session.rank("q", &[0], 3).unwrap();
        session.rank("q", &[0, 2], 3).unwrap();
        // Three more single-text calls for the queries, none for triples.
        assert_eq!(counts.embed_calls(), 4);
        assert_eq!(counts.embed_texts(), 6);
    }

    #[test]
    fn session_ranking_matches_the_one_shot_path_exactly() {
        let embedder = fallback_embedder(8);
        let kg = KnowledgeGraph::from_triples(vec![
            t("alpha", "r", "one"),
            t("beta", "r", "two"),
            t("gamma", "r", "three"),
            t("delta", "r", "four"),
        ]);
        let session = RankerSession::new(&embedder, &kg).unwrap();
        for selected in [vec![], vec![2], vec![1, 3]] {
            let a = session.rank("which?", &selected, 3).unwrap();
            let b = rank_candidates("which?", &selected, &kg, 3, &embedder).unwrap();
            assert_eq!(a, b);
        }
    }

    fn small_word() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-z]{1,6}").unwrap()
    }

    proptest! {
        /// The top-k list is always a prefix of the top-(k+1) list.
        #[test]
        fn top_k_is_prefix_of_top_k_plus_one(
            words in proptest::collection::vec((small_word(), small_word(), small_word()), 1..10),
            question in small_word(),
        ) {
            let embedder = fallback_embedder(6);
            let kg = KnowledgeGraph::from_triples(
                words.iter().map(|(h, r, tl)| t(h, r, tl)).collect(),
            );
            let session = RankerSession::new(&embedder, &kg).unwrap();
            for k in 1..=kg.len() {
                let smaller = session.rank(&question, &[], k).unwrap();
                let larger = session.rank(&question, &[], k + 1).unwrap();
                prop_assert_eq!(smaller.as_slice(), &larger[..smaller.len().min(larger.len())]);
            }
        }
    }
}
