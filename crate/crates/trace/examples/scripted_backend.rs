//! The scripted backend: deterministic model responses from a JSON rule
//! table, the tool behind every offline example and test in this crate.
//!
//! A script holds three rule lists (generations, option logits,
//! embeddings). Each rule pairs a match condition, one substring or a
//! conjunction of substrings, with a canned response; the first matching
//! rule wins. Texts no rule covers fall back to hash-seeded unit vectors
//! for embeddings, and error in strict mode otherwise.
//!
//! Run with: cargo run --example scripted_backend

use anyhow::Result;
use trace::backend::{
    EmbeddingRequest, EmbeddingRole, GenerationRequest, ModelBackend, OptionLogitRequest,
};
use trace::selector::softmax;
use trace::ScriptedBackend;

fn main() -> Result<()> {
    let backend = ScriptedBackend::from_json(
        r#"{
            "embedding_dim": 4,
            "generations": [
                {
                    "match": ["Title: Mars", "Knowledge Triples:"],
                    "response": " <Mars; order from sun; fourth>, <Mars; color; red>\n\nTitle: leftover text the stop sequence removes"
                }
            ],
            "option_logits": [
                {
                    "match": "question: Which planet is red?",
                    "logits": {"A": -2.0, "B": 3.5, "C": 0.5}
                }
            ],
            "embeddings": [
                {"match": "query: red planet", "vector": [1.0, 0.0, 0.0, 0.0]},
                {"match": "<Mars; color; red>", "vector": [0.9, 0.1, 0.0, 0.0]}
            ]
        }"#,
    )?;

    // Generation: greedy completion, stop sequences cut the tail off.
    let mut request = GenerationRequest::greedy(
        "Title: Mars\nText: Mars is the fourth planet.\nKnowledge Triples:",
        128,
    );
    request.stop = vec!["\n\n".to_string()];
    let completion = backend.generate(&request)?;
    println!("generation:{completion}");

    // Option logits: one logit per label, softmax turns them into a
    // distribution over the offered choices.
    let logits = backend.option_logits(&OptionLogitRequest {
        prompt: "question: Which planet is red?\nthe next possible triple is:".into(),
        labels: vec!["A".into(), "B".into(), "C".into()],
    })?;
    let probs = softmax(&logits);
    println!("\nlogits: {logits:?}");
    for (label, p) in ["A", "B", "C"].iter().zip(&probs) {
        println!("  P({label}) = {p:.4}");
    }

    // Embeddings: the role picks a prefix before rules match ("query: "
    // by default for queries, nothing for passages).
    let vectors = backend.embed(&EmbeddingRequest::new(
        vec!["red planet".into(), "<Mars; color; red>".into()],
        EmbeddingRole::Query,
    ))?;
    println!("\nquery vector for 'red planet': {:?}", vectors[0]);

    let passage = backend.embed(&EmbeddingRequest::new(
        vec!["<Mars; color; red>".into()],
        EmbeddingRole::Passage,
    ))?;
    let dot: f64 = vectors[0].iter().zip(&passage[0]).map(|(a, b)| a * b).sum();
    println!("passage vector for the triple: {:?}", passage[0]);
    println!("query . passage = {dot:.2}");

    // Unscripted texts still embed: a deterministic unit vector seeded
    // from the text hash, so similarity comparisons stay reproducible.
    let fallback = backend.embed(&EmbeddingRequest::new(
        vec!["text no rule covers".into()],
        EmbeddingRole::Passage,
    ))?;
    let norm: f64 = fallback[0].iter().map(|x| x * x).sum::<f64>().sqrt();
    println!("\nfallback embedding norm: {norm:.6}");

    Ok(())
}
