//! The four ways chains become reader context.
//!
//! triple: the chains themselves, rendered one per line. Compact, and
//! the reader sees exactly the knowledge the chains picked.
//! doc: full text of the documents the chains vote for, votes being
//! the source documents of the triples used.
//! all_docs: every retrieved document, bypassing the chains.
//! none: no context, measuring what the reader knows on its own.
//!
//! Run with: cargo run --example answer_modes

use std::path::Path;

use anyhow::Result;
use trace::chain::{construct_chains, ChainConfig};
use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use trace::kg::{assemble_question_kg, KgGenConfig, KgGenerator};
use trace::reader::{answer, build_context, VoteConfig};
use trace::{load_dataset, DatasetFormat, ReaderMode, ScriptedBackend};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let backend = ScriptedBackend::from_path(fixtures.join("script.json"))?;
    let (items, _) = load_dataset(fixtures.join("dataset.json"), DatasetFormat::Hotpotqa)?;

    let kg_demos = DemoIndex::build(DemoStore::empty(DemoKind::KgGeneration), &backend)?;
    let chain_demos = DemoIndex::build(DemoStore::empty(DemoKind::ChainConstruction), &backend)?;
    let generator = KgGenerator::new(&backend, &backend, &kg_demos, KgGenConfig::default());
    let config = ChainConfig {
        max_len: 2,
        num_chains: 2,
        beam_width: 2,
        num_candidates: 4,
        num_demos: 0,
        ..ChainConfig::default()
    };

    let item = &items[0];
    let per_document: Vec<_> = item
        .documents
        .iter()
        .map(|doc| generator.generate(doc).map(|(triples, _)| triples))
        .collect::<trace::Result<_>>()?;
    let kg = assemble_question_kg(&per_document);
    let chains = construct_chains(
        &item.question,
        &item.id,
        &kg,
        &config,
        &backend,
        &backend,
        &chain_demos,
    )?;

    println!("question: {}\n", item.question);

    for mode in [
        ReaderMode::Triple,
        ReaderMode::Doc,
        ReaderMode::AllDocs,
        ReaderMode::None,
    ] {
        let bundle = build_context(mode, &chains, &item.documents, VoteConfig::default());
        println!("mode {:?}: {} context tokens", mode, bundle.token_count);
        if !bundle.voted_titles.is_empty() {
            println!("  documents: {}", bundle.voted_titles.join(", "));
        }
        if !bundle.context_text.is_empty() {
            for line in bundle.context_text.lines().take(3) {
                println!("  | {line}");
            }
        }
        println!();
    }

    // The reader itself: one greedy completion over the chosen context.
    let bundle = build_context(
        ReaderMode::Triple,
        &chains,
        &item.documents,
        VoteConfig::default(),
    );
    let prediction = answer(&item.question, &item.id, &bundle, &backend)?;
    println!("triple-mode answer: {:?}", prediction.answer);
    println!("gold answer:        {:?}", item.answer);

    Ok(())
}
