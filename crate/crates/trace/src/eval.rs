//! Answer scoring and run-level reporting.
//!
//! EM and F1 follow the normalization convention shared by the extractive
//! QA benchmarks: lowercase, strip punctuation, drop articles, collapse
//! whitespace. Run reports add context-size and document-selection
//! diagnostics on top of the two answer metrics.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::chain::ReasoningChain;
use crate::corpus::QAItem;
use crate::error::{Result, TraceError};
use crate::reader::{vote_documents, Prediction, ReaderMode, VoteConfig};

/// Normalize an answer string for comparison: lowercase, delete ASCII
/// punctuation, remove the articles a/an/the as whole words, collapse
/// whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let depunct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    depunct
        .split_whitespace()
        .filter(|tok| !matches!(*tok, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 when the normalized strings are equal, else 0.0.
pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize_answer(pred) == normalize_answer(gold) {
        1.0
    } else {
        0.0
    }
}

/// Token-level F1 over normalized whitespace tokens with multiset
/// overlap. Both sides empty scores 1, exactly one side empty scores 0.
pub fn f1(pred: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(pred);
    let gold_norm = normalize_answer(gold);
    let pred_tokens: Vec<&str> = pred_norm.split_whitespace().collect();
    let gold_tokens: Vec<&str> = gold_norm.split_whitespace().collect();
    if pred_tokens.is_empty() || gold_tokens.is_empty() {
        return if pred_tokens.is_empty() && gold_tokens.is_empty() {
            1.0
        } else {
            0.0
        };
    }
    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for tok in &gold_tokens {
        *gold_counts.entry(tok).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for tok in &pred_tokens {
        if let Some(count) = gold_counts.get_mut(tok) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred_tokens.len() as f64;
    let recall = overlap as f64 / gold_tokens.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Aggregate metrics for one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub em: f64,
    pub f1: f64,
    /// Number of scored predictions.
    pub n: usize,
    pub avg_context_tokens: f64,
    /// Mean triples per returned chain; absent when no chains were given.
    pub avg_chain_length: Option<f64>,
    /// Mean number of documents elected per item; absent when no document
    /// information exists for any item.
    pub avg_relevant_docs: Option<f64>,
    /// Mean over items of the fraction of elected documents outside the
    /// gold supporting set; items without elected documents or without
    /// gold annotations are skipped.
    pub doc_error_rate: Option<f64>,
    /// Name of the tokenization used for context sizes.
    pub token_counter: String,
}

impl EvalReport {
    /// Render the report as an aligned two-column table.
    pub fn render_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "-".to_string(),
        };
        let rows = vec![
            ("em".to_string(), format!("{:.4}", self.em)),
            ("f1".to_string(), format!("{:.4}", self.f1)),
            ("n".to_string(), self.n.to_string()),
            (
                "avg_context_tokens".to_string(),
                format!("{:.2}", self.avg_context_tokens),
            ),
            (
                "avg_chain_length".to_string(),
                fmt_opt(self.avg_chain_length),
            ),
            (
                "avg_relevant_docs".to_string(),
                fmt_opt(self.avg_relevant_docs),
            ),
            ("doc_error_rate".to_string(), fmt_opt(self.doc_error_rate)),
            ("token_counter".to_string(), self.token_counter.clone()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}"))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Score a run: predictions against gold answers, plus chain and
/// document-selection statistics.
///
/// Every prediction must correspond to an item by id; predictions with
/// unknown ids abort with an error listing them. Items without
/// predictions are ignored, so partial runs evaluate cleanly. `chains`
/// may be empty when the answering mode did not construct any.
pub fn evaluate_run(
    predictions: &[Prediction],
    items: &[QAItem],
    chains: &[ReasoningChain],
) -> Result<EvalReport> {
    let items_by_id: HashMap<&str, &QAItem> =
        items.iter().map(|it| (it.id.as_str(), it)).collect();
    let orphans: Vec<String> = predictions
        .iter()
        .filter(|p| !items_by_id.contains_key(p.id.as_str()))
        .map(|p| p.id.clone())
        .collect();
    if !orphans.is_empty() {
        return Err(TraceError::OrphanPredictions(orphans));
    }
    let mut chains_by_id: HashMap<&str, Vec<&ReasoningChain>> = HashMap::new();
    for chain in chains {
        chains_by_id
            .entry(chain.question_id.as_str())
            .or_default()
            .push(chain);
    }

    let mut em_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut token_sum = 0usize;
    let mut chain_count = 0usize;
    let mut chain_triple_sum = 0usize;
    let mut doc_counts: Vec<usize> = Vec::new();
    let mut error_fractions: Vec<f64> = Vec::new();

    for pred in predictions {
        let item = items_by_id[pred.id.as_str()];
        em_sum += exact_match(&pred.answer, &item.answer);
        f1_sum += f1(&pred.answer, &item.answer);
        token_sum += pred.context_tokens;

        let item_chains = chains_by_id.get(pred.id.as_str());
        if let Some(item_chains) = item_chains {
            for chain in item_chains.iter() {
                chain_count += 1;
                chain_triple_sum += chain.len();
            }
        }

        // The document set a mode actually used: the prediction's own
        // titles for document modes, chain votes otherwise.
        let docs: Option<Vec<String>> = match pred.mode {
            ReaderMode::Doc | ReaderMode::AllDocs => Some(pred.voted_titles.clone()),
            ReaderMode::Triple | ReaderMode::None => item_chains.map(|ch| {
                let owned: Vec<ReasoningChain> = ch.iter().map(|c| (*c).clone()).collect();
                let (voted, _) = vote_documents(&owned, &item.documents, VoteConfig::default());
                voted.iter().map(|d| d.title.clone()).collect()
            }),
        };
        if let Some(docs) = docs {
            doc_counts.push(docs.len());
            if !docs.is_empty() && !item.supporting_titles.is_empty() {
                let supporting: HashSet<&str> =
                    item.supporting_titles.iter().map(|s| s.as_str()).collect();
                let wrong = docs
                    .iter()
                    .filter(|t| !supporting.contains(t.as_str()))
                    .count();
                error_fractions.push(wrong as f64 / docs.len() as f64);
            }
        }
    }

    let n = predictions.len();
    let mean = |sum: f64| if n == 0 { 0.0 } else { sum / n as f64 };
    Ok(EvalReport {
        em: mean(em_sum),
        f1: mean(f1_sum),
        n,
        avg_context_tokens: mean(token_sum as f64),
        avg_chain_length: if chain_count == 0 {
            None
        } else {
            Some(chain_triple_sum as f64 / chain_count as f64)
        },
        avg_relevant_docs: if doc_counts.is_empty() {
            None
        } else {
            Some(doc_counts.iter().sum::<usize>() as f64 / doc_counts.len() as f64)
        },
        doc_error_rate: if error_fractions.is_empty() {
            None
        } else {
            Some(error_fractions.iter().sum::<f64>() / error_fractions.len() as f64)
        },
        token_counter: "whitespace".to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::kg::KnowledgeTriple;
    use proptest::prelude::*;

    #[test]
    fn normalization_applies_all_four_steps() {
        assert_eq!(normalize_answer("The Novelist."), "novelist");
        assert_eq!(normalize_answer(""), "");
        assert_eq!(normalize_answer("3 July 1814"), "3 july 1814");
        assert_eq!(normalize_answer("An  apple a day"), "apple day");
        assert_eq!(normalize_answer("U.S.A."), "usa");
        assert_eq!(normalize_answer("a-b"), "ab");
    }

    #[test]
    fn exact_match_fixtures() {
        assert_eq!(exact_match("novelist", "novelist"), 1.0);
        assert_eq!(exact_match("", "x"), 0.0);
        assert_eq!(exact_match("the 2 September 1988", "2 september 1988"), 1.0);
        assert_eq!(exact_match("Hermann Einstein", "hermann einstein"), 1.0);
        assert_eq!(exact_match("14 March 1879", "March 1879"), 0.0);
    }

    #[test]
    fn f1_fixtures() {
        assert!((f1("14 March 1879", "March 1879") - 0.8).abs() < 1e-12);
        assert_eq!(f1("identical answer", "identical answer"), 1.0);
        assert_eq!(f1("cat", "dog"), 0.0);
        assert_eq!(f1("", ""), 1.0);
        assert_eq!(f1("", "x"), 0.0);
        assert_eq!(f1("x", ""), 0.0);
        // Multiset overlap: one x and one y are shared.
        assert!((f1("x x y", "x y y") - 2.0 / 3.0).abs() < 1e-12);
    }

    fn pred(id: &str, answer: &str, mode: ReaderMode, tokens: usize, titles: &[&str]) -> Prediction {
        Prediction {
            id: id.into(),
            answer: answer.into(),
            mode,
            context_tokens: tokens,
            voted_titles: titles.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn item(id: &str, answer: &str, supporting: &[&str]) -> QAItem {
        QAItem {
            id: id.into(),
            question: format!("{id}?"),
            answer: answer.into(),
            documents: vec![
                Document::new("Alpha", "alpha text"),
                Document::new("Beta", "beta text"),
                Document::new("Gamma", "gamma text"),
            ],
            supporting_titles: supporting.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn chain_for(id: &str, sources: &[&str]) -> ReasoningChain {
        ReasoningChain {
            question_id: id.into(),
            triples: sources
                .iter()
                .map(|s| KnowledgeTriple::new("h", "r", "t", *s))
                .collect(),
            labels: vec!["B".into(); sources.len()],
            score: 0.5,
            terminated: true,
        }
    }

    #[test]
    fn report_averages_em_f1_and_tokens() {
        let items = vec![item("q1", "right", &[]), item("q2", "march 1879", &[])];
        let preds = vec![
            pred("q1", "right", ReaderMode::None, 10, &[]),
            pred("q2", "14 march 1879", ReaderMode::None, 30, &[]),
        ];
        let report = evaluate_run(&preds, &items, &[]).unwrap();
        assert_eq!(report.n, 2);
        assert!((report.em - 0.5).abs() < 1e-12);
        assert!((report.f1 - 0.9).abs() < 1e-12);
        assert!((report.avg_context_tokens - 20.0).abs() < 1e-12);
        assert_eq!(report.avg_chain_length, None);
        assert_eq!(report.avg_relevant_docs, None);
        assert_eq!(report.doc_error_rate, None);
        assert_eq!(report.token_counter, "whitespace");
    }

    #[test]
    fn doc_error_rate_counts_unsupported_fraction() {
        let items = vec![item("q1", "x", &["Alpha", "Beta"])];
        let preds = vec![pred(
            "q1",
            "x",
            ReaderMode::Doc,
            5,
            &["Alpha", "Beta", "Gamma"],
        )];
        let report = evaluate_run(&preds, &items, &[]).unwrap();
        assert!((report.doc_error_rate.unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((report.avg_relevant_docs.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn doc_error_rate_is_zero_when_all_docs_support() {
        let items = vec![item("q1", "x", &["Alpha", "Beta"])];
        let preds = vec![pred("q1", "x", ReaderMode::Doc, 5, &["Alpha", "Beta"])];
        let report = evaluate_run(&preds, &items, &[]).unwrap();
        assert_eq!(report.doc_error_rate, Some(0.0));
    }

    #[test]
    fn triple_mode_elects_documents_through_chain_votes() {
        let items = vec![item("q1", "x", &["Alpha"])];
        let preds = vec![pred("q1", "x", ReaderMode::Triple, 5, &[])];
        let chains = vec![chain_for("q1", &["Alpha", "Alpha", "Beta"])];
        let report = evaluate_run(&preds, &items, &chains).unwrap();
        // Voted docs: Alpha (2), Beta (1); Beta is unsupported.
        assert!((report.doc_error_rate.unwrap() - 0.5).abs() < 1e-12);
        assert!((report.avg_relevant_docs.unwrap() - 2.0).abs() < 1e-12);
        assert!((report.avg_chain_length.unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_vote_items_are_skipped_for_error_rate() {
        let items = vec![item("q1", "x", &["Alpha"]), item("q2", "y", &["Beta"])];
        let preds = vec![
            pred("q1", "x", ReaderMode::Triple, 2, &[]),
            pred("q2", "y", ReaderMode::Triple, 2, &[]),
        ];
        // q1 chains vote; q2 chain is empty so it elects nothing.
        let chains = vec![chain_for("q1", &["Beta"]), chain_for("q2", &[])];
        let report = evaluate_run(&preds, &items, &chains).unwrap();
        assert_eq!(report.doc_error_rate, Some(1.0));
        assert!((report.avg_relevant_docs.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orphan_predictions_abort_with_their_ids() {
        let items = vec![item("q1", "x", &[])];
        let preds = vec![
            pred("q1", "x", ReaderMode::None, 0, &[]),
            pred("ghost", "y", ReaderMode::None, 0, &[]),
        ];
        let err = evaluate_run(&preds, &items, &[]).unwrap_err();
        match err {
            TraceError::OrphanPredictions(ids) => assert_eq!(ids, vec!["ghost".to_string()]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn report_is_permutation_invariant() {
        let items = vec![
            item("q1", "x", &["Alpha"]),
            item("q2", "y", &["Beta"]),
            item("q3", "z", &["Gamma"]),
        ];
        let preds = vec![
            pred("q1", "x", ReaderMode::Doc, 3, &["Alpha"]),
            pred("q2", "wrong", ReaderMode::Doc, 7, &["Alpha", "Beta"]),
            pred("q3", "z", ReaderMode::Doc, 11, &["Gamma"]),
        ];
        let a = evaluate_run(&preds, &items, &[]).unwrap();
        let mut items_rev = items.clone();
        items_rev.reverse();
        let mut preds_rev = preds.clone();
        preds_rev.reverse();
        let b = evaluate_run(&preds_rev, &items_rev, &[]).unwrap();
        assert_eq!(a.em, b.em);
        assert_eq!(a.f1, b.f1);
        assert_eq!(a.avg_context_tokens, b.avg_context_tokens);
        assert_eq!(a.doc_error_rate, b.doc_error_rate);
    }

    #[test]
    fn empty_run_reports_zeros_without_dividing() {
        let report = evaluate_run(&[], &[], &[]).unwrap();
        assert_eq!(report.n, 0);
        assert_eq!(report.em, 0.0);
        assert_eq!(report.f1, 0.0);
        assert_eq!(report.avg_context_tokens, 0.0);
        assert_eq!(report.avg_chain_length, None);
        assert_eq!(report.doc_error_rate, None);
    }

    #[test]
    fn table_rendering_aligns_columns() {
        let report = EvalReport {
            em: 0.5,
            f1: 0.75,
            n: 2,
            avg_context_tokens: 20.0,
            avg_chain_length: Some(2.0),
            avg_relevant_docs: None,
            doc_error_rate: None,
            token_counter: "whitespace".into(),
        };
        let table = report.render_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 8);
        assert!(lines[0].starts_with("em"));
        let value_col: Vec<usize> = lines
            .iter()
            .map(|l| l.rfind("  ").map(|i| i + 2).unwrap())
            .collect();
        assert!(value_col.windows(2).all(|w| w[0] == w[1]));
    }

    proptest! {
        #[test]
        fn f1_is_symmetric_and_bounded(
            a in "[a-z0-9 ]{0,40}",
            b in "[a-z0-9 ]{0,40}",
        ) {
            let ab = f1(&a, &b);
            let ba = f1(&b, &a);
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn exact_match_implies_perfect_f1(s in "[a-zA-Z0-9 ,.]{1,40}") {
            if exact_match(&s, &s) == 1.0 {
                prop_assert_eq!(f1(&s, &s), 1.0);
            }
        }

        #[test]
        fn normalization_is_idempotent(s in "[a-zA-Z0-9 ,.']{0,60}") {
            let once = normalize_answer(&s);
            prop_assert_eq!(normalize_answer(&once), once);
        }
    }
}
