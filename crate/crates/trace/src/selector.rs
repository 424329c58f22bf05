//! Multiple-choice triple selection.
//!
//! The next reasoning step is phrased as a lettered multiple-choice
//! question: option A always means "stop here", the remaining labels name
//! the candidate triples in rank order. The selector reads the logits of
//! the option labels from a single next-token position and normalizes
//! them with a softmax, so one backend call prices every candidate and
//! the termination option at once.

use serde::{Deserialize, Serialize};

use crate::backend::{GenerationRequest, ModelBackend, OptionLogitRequest};
use crate::error::{Result, TraceError};
use crate::kg::{render_triples, KnowledgeGraph, KnowledgeTriple};
use crate::ranker::RankedCandidate;
use crate::template;

/// Text of the termination option.
pub const TERMINATE_OPTION_TEXT: &str = "no need for additional knowledge triples";

/// Instruction for the selection prompt.
pub const SELECTION_INSTRUCTION: &str = "Select the next knowledge triple that extends an existing set of knowledge triples to form a coherent reasoning path capable of answering a specified question. If the current reasoning path is sufficient to answer the question, simply output A. Please only output the choice for the next knowledge triple.";

/// Sentence introducing the demonstration traces.
pub const SELECTION_DEMOS_PREAMBLE: &str = "The following are some examples of coherent reasoning paths capable of answering the specified question and how the l-th knowledge triples in these paths are selected:";

/// Default selection prompt layout.
pub const DEFAULT_SELECTION_TEMPLATE: &str = "{instruction}\n\n{demonstrations}The l-th triple in the reasoning path is selected as:\nexisting knowledge triples:{existing_triples}\nquestion: {question}\ncandidate knowledge triples:\n{options}\nthe next possible triple is:";

/// Option labels in offer order: "A" through "Z", then "1" through "9".
pub fn label_alphabet() -> Vec<String> {
    ('A'..='Z')
        .chain('1'..='9')
        .map(|c| c.to_string())
        .collect()
}

/// What choosing an option label means.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChoiceTarget {
    /// Stop extending the chain.
    Terminate,
    /// Append the triple at this graph index.
    Triple(usize),
}

/// A rendered multiple-choice prompt with its label table.
#[derive(Debug, Clone)]
pub struct ChoicePrompt {
    pub text: String,
    /// `(label, target)` pairs in offer order; entry 0 is always
    /// `("A", Terminate)`.
    pub options: Vec<(String, ChoiceTarget)>,
}

impl ChoicePrompt {
    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|(l, _)| l.clone()).collect()
    }
}

/// Build the selection prompt for one reasoning step.
///
/// Candidates appear in rank order under labels "B" onward; a candidate
/// list longer than the label alphabet is truncated to the largest
/// prefix that fits, with a logged warning.
pub fn build_selection_prompt(
    template_text: Option<&str>,
    question: &str,
    selected: &[KnowledgeTriple],
    kg: &KnowledgeGraph,
    candidates: &[RankedCandidate],
    demos: &[String],
) -> ChoicePrompt {
    let alphabet = label_alphabet();
    let max_candidates = alphabet.len() - 1;
    let kept = if candidates.len() > max_candidates {
        log::warn!(
            "truncating candidate list from {} to {} to fit the option alphabet",
            candidates.len(),
            max_candidates
        );
        &candidates[..max_candidates]
    } else {
        candidates
    };

    let mut options = Vec::with_capacity(kept.len() + 1);
    options.push((alphabet[0].clone(), ChoiceTarget::Terminate));
    let mut option_lines = vec![format!("{}. {}", alphabet[0], TERMINATE_OPTION_TEXT)];
    for (i, cand) in kept.iter().enumerate() {
        let label = alphabet[i + 1].clone();
        let triple = &kg.triples()[cand.triple_index];
        option_lines.push(format!("{label}. {}", triple.render()));
        options.push((label, ChoiceTarget::Triple(cand.triple_index)));
    }

    let existing = if selected.is_empty() {
        String::new()
    } else {
        format!(" {}", render_triples(selected))
    };
    let rendered_demos = if demos.is_empty() {
        String::new()
    } else {
        format!("{SELECTION_DEMOS_PREAMBLE}\n\n{}\n\n", demos.join("\n\n"))
    };
    let text = template::render(
        template_text.unwrap_or(DEFAULT_SELECTION_TEMPLATE),
        &[
            ("instruction", SELECTION_INSTRUCTION),
            ("demonstrations", &rendered_demos),
            ("existing_triples", &existing),
            ("question", question),
            ("options", &option_lines.join("\n")),
        ],
    );
    ChoicePrompt { text, options }
}

/// Numerically stable softmax.
///
/// The maximum is subtracted before exponentiation, so the result is
/// invariant to shifting every logit by a constant.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    if logits.is_empty() {
        return Vec::new();
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// How the selector extracts a distribution from the backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorMode {
    /// Softmax over the option-label logits (the standard mode).
    Logits,
    /// Degraded mode for backends without logit access: one greedy token
    /// is generated and the distribution is one-hot on the emitted label.
    SingleToken,
}

impl Default for SelectorMode {
    fn default() -> Self {
        SelectorMode::Logits
    }
}

/// Probability of each option in `prompt`, aligned with `prompt.options`.
///
/// In [`SelectorMode::Logits`] every option gets positive probability; in
/// the degraded single-token mode exactly one option gets probability 1
/// and an emitted token outside the label set is an error.
pub fn triple_distribution(
    prompt: &ChoicePrompt,
    backend: &dyn ModelBackend,
    mode: SelectorMode,
) -> Result<Vec<f64>> {
    match mode {
        SelectorMode::Logits => {
            let req = OptionLogitRequest {
                prompt: prompt.text.clone(),
                labels: prompt.labels(),
            };
            let logits = backend.option_logits(&req)?;
            Ok(softmax(&logits))
        }
        SelectorMode::SingleToken => {
            let req = GenerationRequest::greedy(prompt.text.clone(), 1);
            let emitted = backend.generate(&req)?;
            let emitted = emitted.trim();
            let hit = prompt
                .options
                .iter()
                .position(|(label, _)| label == emitted)
                .ok_or_else(|| TraceError::UnknownLabel(emitted.to_string()))?;
            let mut probs = vec![0.0; prompt.options.len()];
            probs[hit] = 1.0;
            Ok(probs)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use proptest::prelude::*;

    fn t(head: &str, relation: &str, tail: &str) -> KnowledgeTriple {
        KnowledgeTriple::new(head, relation, tail, head)
    }

    fn cands(indices: &[usize]) -> Vec<RankedCandidate> {
        indices
            .iter()
            .map(|&i| RankedCandidate {
                triple_index: i,
                score: 0.0,
            })
            .collect()
    }

    #[test]
    fn alphabet_is_letters_then_digits() {
        let labels = label_alphabet();
        assert_eq!(labels.len(), 35);
        assert_eq!(labels[0], "A");
        assert_eq!(labels[25], "Z");
        assert_eq!(labels[26], "1");
        assert_eq!(labels[34], "9");
    }

    #[test]
    fn prompt_offers_termination_first_then_candidates_in_rank_order() {
        let kg = KnowledgeGraph::from_triples(vec![
            t("a", "r", "x"),
            t("b", "r", "y"),
            t("c", "r", "z"),
        ]);
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&[2, 0]), &[]);
        assert_eq!(prompt.options[0], ("A".to_string(), ChoiceTarget::Terminate));
        assert_eq!(prompt.options[1], ("B".to_string(), ChoiceTarget::Triple(2)));
        assert_eq!(prompt.options[2], ("C".to_string(), ChoiceTarget::Triple(0)));
        assert!(prompt.text.contains("A. no need for additional knowledge triples"));
        assert!(prompt.text.contains("B. <c; r; z>"));
        assert!(prompt.text.contains("C. <a; r; x>"));
        assert!(prompt.text.ends_with("the next possible triple is:"));
    }

    #[test]
    fn empty_existing_block_renders_bare() {
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x")]);
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&[0]), &[]);
        assert!(prompt.text.contains("existing knowledge triples:\nquestion: q?"));

        let selected = vec![t("a", "r", "x")];
        let prompt = build_selection_prompt(None, "q?", &selected, &kg, &cands(&[0]), &[]);
        assert!(prompt
            .text
            .contains("existing knowledge triples: <a; r; x>\nquestion: q?"));
    }

    #[test]
    fn demos_sit_between_instruction_and_task() {
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x")]);
        let prompt = build_selection_prompt(
            None,
            "q?",
            &[],
            &kg,
            &cands(&[0]),
            &["DEMO BLOCK".to_string()],
        );
        let instr = prompt.text.find(SELECTION_INSTRUCTION).unwrap();
        let preamble = prompt.text.find(SELECTION_DEMOS_PREAMBLE).unwrap();
        let demo = prompt.text.find("DEMO BLOCK").unwrap();
        let task = prompt.text.find("The l-th triple in the reasoning path").unwrap();
        assert!(instr < preamble && preamble < demo && demo < task);

        let bare = build_selection_prompt(None, "q?", &[], &kg, &cands(&[0]), &[]);
        assert!(!bare.text.contains(SELECTION_DEMOS_PREAMBLE));
    }

    #[test]
    fn oversized_candidate_lists_truncate_to_the_alphabet() {
        let triples: Vec<KnowledgeTriple> = (0..40)
            .map(|i| t(&format!("h{i}"), "r", &format!("t{i}")))
            .collect();
        let kg = KnowledgeGraph::from_triples(triples);
        let all: Vec<usize> = (0..40).collect();
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&all), &[]);
        assert_eq!(prompt.options.len(), 35);
        assert_eq!(prompt.options[34].0, "9");
        assert_eq!(prompt.options[34].1, ChoiceTarget::Triple(33));
    }

    #[test]
    fn softmax_matches_hand_computed_values() {
        let probs = softmax(&[0.0, 0.0]);
        assert_eq!(probs, vec![0.5, 0.5]);

        let probs = softmax(&[1.0, 2.0, 3.0]);
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for (p, e) in probs.iter().zip(expected) {
            assert!((p - e).abs() < 1e-5, "{p} vs {e}");
        }
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logits_mode_returns_the_softmax_of_scripted_logits() {
        let backend = ScriptedBackend::from_json(
            r#"{"option_logits": [{"match": "the next possible triple is:", "logits": {"A": 0.0, "B": 2.0, "C": 1.0}}]}"#,
        )
        .unwrap();
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x"), t("b", "r", "y")]);
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&[0, 1]), &[]);
        let probs = triple_distribution(&prompt, &backend, SelectorMode::Logits).unwrap();
        let expected = softmax(&[0.0, 2.0, 1.0]);
        assert_eq!(probs, expected);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn single_token_mode_returns_one_hot() {
        let backend = ScriptedBackend::from_json(
            r#"{"generations": [{"match": "the next possible triple is:", "response": "B"}]}"#,
        )
        .unwrap();
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x")]);
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&[0]), &[]);
        let probs = triple_distribution(&prompt, &backend, SelectorMode::SingleToken).unwrap();
        assert_eq!(probs, vec![0.0, 1.0]);
    }

    #[test]
    fn single_token_mode_rejects_unknown_labels() {
        let backend = ScriptedBackend::from_json(
            r#"{"generations": [{"match": "the next possible triple is:", "response": "Q"}]}"#,
        )
        .unwrap();
        let kg = KnowledgeGraph::from_triples(vec![t("a", "r", "x")]);
        let prompt = build_selection_prompt(None, "q?", &[], &kg, &cands(&[0]), &[]);
        let err = triple_distribution(&prompt, &backend, SelectorMode::SingleToken).unwrap_err();
        assert!(matches!(err, TraceError::UnknownLabel(l) if l == "Q"));
    }

    proptest! {
        /// Softmax sums to one, keeps every probability positive, and is
        /// invariant to constant shifts.
        #[test]
        fn softmax_properties(
            logits in proptest::collection::vec(-300.0f64..300.0, 1..12),
            shift in -50.0f64..50.0,
        ) {
            let probs = softmax(&logits);
            prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(probs.iter().all(|&p| p > 0.0));

            let shifted: Vec<f64> = logits.iter().map(|x| x + shift).collect();
            let shifted_probs = softmax(&shifted);
            for (a, b) in probs.iter().zip(&shifted_probs) {
                prop_assert!((a - b).abs() < 1e-12);
            }

            let argmax_logit = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            let argmax_prob = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i);
            prop_assert_eq!(argmax_logit, argmax_prob);
        }

        /// Permuting logits permutes probabilities the same way.
        #[test]
        fn softmax_is_permutation_equivariant(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..8),
            rotation in 0usize..8,
        ) {
            let probs = softmax(&logits);
            let n = logits.len();
            let rotated: Vec<f64> = (0..n).map(|i| logits[(i + rotation) % n]).collect();
            let rotated_probs = softmax(&rotated);
            for i in 0..n {
                prop_assert!((rotated_probs[i] - probs[(i + rotation) % n]).abs() < 1e-12);
            }
        }
    }
}
