//! Assembling per-document triples into a question-level graph.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{normalize_entity, KnowledgeTriple};

/// Size and connectivity statistics for a question-level graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgStats {
    pub num_triples: usize,
    pub num_entities: usize,
    /// `num_triples / (num_entities * (num_entities - 1))`, or 0 with
    /// fewer than two entities.
    pub density: f64,
}

/// The knowledge graph for one question.
///
/// Triples keep their first-occurrence order (documents in dataset
/// order, triples in extraction order). The entity index maps normalized
/// entity names to the triples touching them, which is how tail entities
/// link to title entities of other documents.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    triples: Vec<KnowledgeTriple>,
    entity_index: BTreeMap<String, BTreeSet<usize>>,
    stats: KgStats,
}

impl KnowledgeGraph {
    /// Build a graph from an already-flattened triple list.
    pub fn from_triples(raw: Vec<KnowledgeTriple>) -> Self {
        let mut seen = BTreeSet::new();
        let mut triples = Vec::new();
        for triple in raw {
            if seen.insert(triple.normalized_key()) {
                triples.push(triple);
            }
        }
        let mut entity_index: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        for (i, triple) in triples.iter().enumerate() {
            for entity in [normalize_entity(&triple.head), normalize_entity(&triple.tail)] {
                entity_index.entry(entity).or_default().insert(i);
            }
        }
        let num_triples = triples.len();
        let num_entities = entity_index.len();
        let density = if num_entities >= 2 {
            num_triples as f64 / (num_entities * (num_entities - 1)) as f64
        } else {
            0.0
        };
        KnowledgeGraph {
            triples,
            entity_index,
            stats: KgStats {
                num_triples,
                num_entities,
                density,
            },
        }
    }

    pub fn triples(&self) -> &[KnowledgeTriple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn stats(&self) -> KgStats {
        self.stats
    }

    /// Indices of triples touching the given entity name.
    pub fn triples_touching(&self, entity: &str) -> Option<&BTreeSet<usize>> {
        self.entity_index.get(&normalize_entity(entity))
    }

    /// Normalized entity names in the graph.
    pub fn entities(&self) -> impl Iterator<Item = &str> {
        self.entity_index.keys().map(String::as_str)
    }
}

/// Merge per-document triples (in document order) into one graph.
///
/// Duplicate triples, compared on normalized (head, relation, tail), are
/// collapsed keeping the first occurrence.
pub fn assemble_question_kg(per_document: &[Vec<KnowledgeTriple>]) -> KnowledgeGraph {
    let flat: Vec<KnowledgeTriple> = per_document.iter().flatten().cloned().collect();
    KnowledgeGraph::from_triples(flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(head: &str, relation: &str, tail: &str) -> KnowledgeTriple {
        KnowledgeTriple::new(head, relation, tail, head)
    }

    #[test]
    fn tail_entities_link_to_title_entities_across_documents() {
        let kg = assemble_question_kg(&[
            vec![t("Albert Einstein", "father", "Hermann Einstein")],
            vec![t("Hermann Einstein", "date of birth", "3 July 1814")],
        ]);
        let touching = kg.triples_touching("Hermann Einstein").unwrap();
        assert_eq!(touching.len(), 2, "shared entity joins both documents");
        assert_eq!(kg.stats().num_entities, 3);
        assert_eq!(kg.stats().num_triples, 2);
    }

    #[test]
    fn duplicates_collapse_to_the_first_occurrence() {
        let first = KnowledgeTriple::new("Ulm", "located in", "Germany", "Ulm");
        let dup = KnowledgeTriple::new("ulm", "Located In", "germany", "Other Doc");
        let kg = assemble_question_kg(&[vec![first.clone()], vec![dup]]);
        assert_eq!(kg.triples(), &[first]);
    }

    #[test]
    fn density_matches_the_directed_graph_formula() {
        // One hub with four spokes: 5 entities, 4 triples.
        let kg = KnowledgeGraph::from_triples(vec![
            t("a", "r", "b"),
            t("a", "r", "c"),
            t("a", "r", "d"),
            t("a", "r", "e"),
        ]);
        assert_eq!(kg.stats().num_entities, 5);
        assert_eq!(kg.stats().num_triples, 4);
        assert_eq!(kg.stats().density, 0.20);
    }

    #[test]
    fn degenerate_graphs_have_zero_density() {
        assert_eq!(KnowledgeGraph::from_triples(vec![]).stats().density, 0.0);
        let selfloop = KnowledgeGraph::from_triples(vec![t("a", "is", "a")]);
        assert_eq!(selfloop.stats().num_entities, 1);
        assert_eq!(selfloop.stats().density, 0.0);
    }

    fn entity() -> impl Strategy<Value = String> {
        proptest::string::string_regex("[a-e]{1,2}").unwrap()
    }

    proptest! {
        /// Stats agree with an independent recount on the deduplicated set.
        #[test]
        fn stats_match_independent_recount(
            raw in proptest::collection::vec((entity(), entity(), entity()), 0..20)
        ) {
            let triples: Vec<KnowledgeTriple> =
                raw.iter().map(|(h, r, tl)| t(h, r, tl)).collect();
            let kg = KnowledgeGraph::from_triples(triples);

            let mut keys = BTreeSet::new();
            let mut entities = BTreeSet::new();
            for triple in kg.triples() {
                keys.insert(triple.normalized_key());
                entities.insert(normalize_entity(&triple.head));
                entities.insert(normalize_entity(&triple.tail));
            }
            prop_assert_eq!(kg.stats().num_triples, keys.len());
            prop_assert_eq!(kg.stats().num_entities, entities.len());
            let expected = if entities.len() >= 2 {
                keys.len() as f64 / (entities.len() * (entities.len() - 1)) as f64
            } else {
                0.0
            };
            prop_assert_eq!(kg.stats().density, expected);
        }

        /// Graph statistics ignore the order documents arrive in.
        #[test]
        fn stats_are_permutation_invariant(
            raw in proptest::collection::vec((entity(), entity(), entity()), 1..16),
            seed in any::<u64>(),
        ) {
            let triples: Vec<KnowledgeTriple> =
                raw.iter().map(|(h, r, tl)| t(h, r, tl)).collect();
            let forward = KnowledgeGraph::from_triples(triples.clone());

            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = triples;
            shuffled.shuffle(&mut rng);
            let backward = KnowledgeGraph::from_triples(shuffled);

            prop_assert_eq!(forward.stats(), backward.stats());
        }
    }
}
