//! The similarity-only baseline: rank triples against the bare question
//! and hand the top T straight to the reader, no chain construction.
//!
//! This is the ablation that isolates what beam search adds. It shares
//! the embedding ranker with chain construction but never calls the
//! selector model, so each answer costs one embedding batch and one
//! reader call.
//!
//! Run with: cargo run --example top_t_baseline

use std::path::Path;

use anyhow::Result;
use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use trace::kg::{assemble_question_kg, render_triples, KgGenConfig, KgGenerator};
use trace::ranker::{rank_candidates, top_t_triples};
use trace::{load_dataset, DatasetFormat, ScriptedBackend};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let backend = ScriptedBackend::from_path(fixtures.join("script.json"))?;
    let (items, _) = load_dataset(fixtures.join("dataset.json"), DatasetFormat::Hotpotqa)?;

    let demos = DemoIndex::build(DemoStore::empty(DemoKind::KgGeneration), &backend)?;
    let generator = KgGenerator::new(&backend, &backend, &demos, KgGenConfig::default());

    let item = &items[0];
    let per_document: Vec<_> = item
        .documents
        .iter()
        .map(|doc| generator.generate(doc).map(|(triples, _)| triples))
        .collect::<trace::Result<_>>()?;
    let kg = assemble_question_kg(&per_document);

    println!("question: {}", item.question);
    println!("graph has {} triples\n", kg.stats().num_triples);

    // The scored ranking, before truncation to T.
    let ranked = rank_candidates(&item.question, &[], &kg, kg.stats().num_triples, &backend)?;
    println!("similarity ranking:");
    for candidate in &ranked {
        println!(
            "  {:>6.3}  {}",
            candidate.score,
            kg.triples()[candidate.triple_index].render()
        );
    }

    let top = top_t_triples(&item.question, &kg, 3, &backend)?;
    println!("\ntop-3 context for the reader:");
    println!("{}", render_triples(&top));

    Ok(())
}
