//! Build a question-local knowledge graph from retrieved documents.
//!
//! Each document goes through one extraction prompt; the model lists
//! triples in `<head; relation; tail>` form with the document title as
//! head entity. Parsed triples from all documents merge into one graph
//! per question, deduplicated on normalized (head, relation, tail).
//!
//! Run with: cargo run --example build_kg

use std::path::Path;

use anyhow::Result;
use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use trace::kg::{assemble_question_kg, KgGenConfig, KgGenerator};
use trace::{load_dataset, DatasetFormat, ScriptedBackend};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let backend = ScriptedBackend::from_path(fixtures.join("script.json"))?;
    let (items, report) = load_dataset(fixtures.join("dataset.json"), DatasetFormat::Hotpotqa)?;
    let documents: usize = items.iter().map(|it| it.documents.len()).sum();
    println!(
        "loaded {} questions, {} documents ({} records skipped)\n",
        report.loaded, documents, report.skipped
    );

    // Real runs retrieve few-shot demonstrations per document; the
    // scripted fixture works without any.
    let demos = DemoIndex::build(DemoStore::empty(DemoKind::KgGeneration), &backend)?;
    let generator = KgGenerator::new(&backend, &backend, &demos, KgGenConfig::default());

    let item = &items[0];
    println!("question: {}", item.question);

    let mut per_document = Vec::new();
    for doc in &item.documents {
        let (triples, parse_report) = generator.generate(doc)?;
        println!(
            "\n  {} -> {} triples ({} lines skipped)",
            doc.title, parse_report.parsed, parse_report.skipped
        );
        for triple in &triples {
            println!("    {}", triple.render());
        }
        per_document.push(triples);
    }

    let kg = assemble_question_kg(&per_document);
    let stats = kg.stats();
    println!(
        "\ngraph: {} triples, {} entities, density {:.3}",
        stats.num_triples, stats.num_entities, stats.density
    );

    // The entity index connects triples that share an entity, which is
    // what lets a chain hop from one document to another.
    if let Some(indices) = kg.triples_touching("Hermann Einstein") {
        println!("\ntriples touching 'Hermann Einstein':");
        for &i in indices {
            println!("  [{}] {}", i, kg.triples()[i].render());
        }
    }

    Ok(())
}
