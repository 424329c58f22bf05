//! Score predictions against gold answers.
//!
//! Answers are compared under SQuAD normalization: lowercase, strip
//! punctuation, drop articles, collapse whitespace. Exact match is all
//! or nothing; F1 is the token-overlap harmonic mean, so partial credit
//! for answers that contain the right tokens among extras.
//!
//! Run with: cargo run --example evaluate_predictions

use std::collections::BTreeSet;

use anyhow::Result;
use trace::kg::KnowledgeTriple;
use trace::reader::Prediction;
use trace::{evaluate_run, exact_match, f1, normalize_answer, ReaderMode};
use trace::{Document, QAItem, ReasoningChain};

fn main() -> Result<()> {
    println!("normalization:");
    for raw in ["The Beatles!", "  a   Hard Day's Night  "] {
        println!("  {:?} -> {:?}", raw, normalize_answer(raw));
    }

    println!("\npairwise scores:");
    let pairs = [
        ("Paris", "Paris"),
        ("the city of Paris", "Paris"),
        ("London", "Paris"),
        ("July 3, 1814", "3 July 1814"),
    ];
    for (predicted, gold) in pairs {
        println!(
            "  em {:.0} f1 {:.3}  {:?} vs {:?}",
            exact_match(predicted, gold),
            f1(predicted, gold),
            predicted,
            gold
        );
    }

    // A miniature run: two questions, their predictions, and the chains
    // that produced them. The report pools answer quality with chain
    // statistics and document-level attribution error.
    let items = vec![
        QAItem {
            id: "q1".into(),
            question: "Who wrote Hamlet?".into(),
            answer: "William Shakespeare".into(),
            documents: vec![
                Document::new("Hamlet", "Hamlet is a tragedy by William Shakespeare."),
                Document::new("Macbeth", "Macbeth is another tragedy."),
            ],
            supporting_titles: BTreeSet::from(["Hamlet".to_string()]),
        },
        QAItem {
            id: "q2".into(),
            question: "Capital of France?".into(),
            answer: "Paris".into(),
            documents: vec![Document::new("France", "The capital of France is Paris.")],
            supporting_titles: BTreeSet::from(["France".to_string()]),
        },
    ];

    let predictions = vec![
        Prediction {
            id: "q1".into(),
            answer: "Shakespeare".into(),
            mode: ReaderMode::Triple,
            context_tokens: 12,
            voted_titles: Vec::new(),
        },
        Prediction {
            id: "q2".into(),
            answer: "Paris".into(),
            mode: ReaderMode::Triple,
            context_tokens: 8,
            voted_titles: Vec::new(),
        },
    ];

    let chains = vec![
        ReasoningChain {
            question_id: "q1".into(),
            triples: vec![KnowledgeTriple::new(
                "Hamlet",
                "author",
                "William Shakespeare",
                "Hamlet",
            )],
            labels: vec!["B".into(), "A".into()],
            score: 0.9,
            terminated: true,
        },
        ReasoningChain {
            question_id: "q2".into(),
            triples: vec![KnowledgeTriple::new("France", "capital", "Paris", "France")],
            labels: vec!["B".into(), "A".into()],
            score: 0.8,
            terminated: true,
        },
    ];

    let report = evaluate_run(&predictions, &items, &chains)?;
    println!("\nreport:\n{}", serde_json::to_string_pretty(&report)?);

    Ok(())
}
