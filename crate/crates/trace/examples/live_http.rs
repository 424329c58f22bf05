//! Run extraction and chain construction against a live model server.
//!
//! Talks to any OpenAI-compatible endpoint: /v1/completions with
//! logprobs for generation and option logits, /v1/embeddings for
//! vectors. Point it at a server with:
//!
//!   TRACE_BASE_URL=http://localhost:8000 \
//!   TRACE_MODEL=your-model \
//!   cargo run --example live_http
//!
//! Optional: TRACE_EMBEDDING_MODEL (defaults to TRACE_MODEL) and
//! TRACE_API_KEY for bearer auth. Without TRACE_BASE_URL the example
//! explains itself and exits cleanly, so it is safe under --examples
//! sweeps in offline environments.

use anyhow::Result;
use trace::chain::{construct_chains, ChainConfig};
use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use trace::kg::{assemble_question_kg, KgGenConfig, KgGenerator};
use trace::{Document, HttpBackend, HttpBackendConfig};

fn main() -> Result<()> {
    let base_url = match std::env::var("TRACE_BASE_URL") {
        Ok(url) => url,
        Err(_) => {
            println!("TRACE_BASE_URL is not set; nothing to talk to.");
            println!("Set TRACE_BASE_URL and TRACE_MODEL to run against a live server.");
            return Ok(());
        }
    };
    let model = std::env::var("TRACE_MODEL").unwrap_or_else(|_| "default".to_string());

    let backend = HttpBackend::new(HttpBackendConfig {
        base_url,
        model,
        embedding_model: std::env::var("TRACE_EMBEDDING_MODEL").ok(),
        api_key: std::env::var("TRACE_API_KEY").ok(),
        timeout_secs: 120,
        max_in_flight: 4,
        max_attempts: 3,
        initial_backoff_ms: 500,
        query_prefix: "query: ".to_string(),
        passage_prefix: String::new(),
    })?;

    let question = "When was the father of Albert Einstein born?";
    let documents = [
        Document::new(
            "Albert Einstein",
            "Albert Einstein was a theoretical physicist. His father was Hermann Einstein.",
        ),
        Document::new(
            "Hermann Einstein",
            "Hermann Einstein (30 August 1847 - 10 October 1902) was the father of Albert Einstein.",
        ),
    ];

    let kg_demos = DemoIndex::build(DemoStore::empty(DemoKind::KgGeneration), &backend)?;
    let chain_demos = DemoIndex::build(DemoStore::empty(DemoKind::ChainConstruction), &backend)?;
    let generator = KgGenerator::new(&backend, &backend, &kg_demos, KgGenConfig::default());

    let mut per_document = Vec::new();
    for doc in &documents {
        let (triples, _) = generator.generate(doc)?;
        println!("{}:", doc.title);
        for triple in &triples {
            println!("  {}", triple.render());
        }
        per_document.push(triples);
    }

    let kg = assemble_question_kg(&per_document);
    let config = ChainConfig {
        max_len: 3,
        num_chains: 3,
        beam_width: 3,
        num_candidates: 8,
        num_demos: 0,
        ..ChainConfig::default()
    };
    let chains = construct_chains(
        question, "live-1", &kg, &config, &backend, &backend, &chain_demos,
    )?;

    println!("\nquestion: {question}");
    for chain in &chains {
        println!("  score {:.4}: {}", chain.score, chain.render());
    }

    Ok(())
}
