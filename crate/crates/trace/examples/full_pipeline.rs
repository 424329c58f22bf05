//! The staged pipeline end to end, as the `trace` binary runs it.
//!
//! One JSON config names the dataset, the three model backends, and the
//! output locations. Stages communicate through artifacts in the output
//! directory: build-kg fills the triple cache, construct-chains writes
//! chains.jsonl, answer writes predictions.jsonl, evaluate writes
//! report.json. Each artifact opens with a meta line recording the
//! config snapshot, so a run documents itself.
//!
//! This example copies the bundled synthetic fixture into a temp
//! directory and runs all four stages twice, showing the triple cache
//! carrying the second run.
//!
//! Run with: cargo run --example full_pipeline

use std::path::Path;

use anyhow::Result;
use trace::{load_config, Pipeline};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let dir = tempfile::tempdir()?;
    for name in ["config.json", "dataset.json", "script.json"] {
        std::fs::copy(fixtures.join(name), dir.path().join(name))?;
    }

    // Relative paths in the config resolve against the config file's
    // directory, so the copied fixture is self-contained.
    let loaded = load_config(dir.path().join("config.json"), &[])?;
    let pipeline = Pipeline::new(loaded)?;

    let summary = pipeline.build_kg()?;
    println!(
        "build-kg: {} documents, {} generator calls, {} triples",
        summary.documents, summary.generator_calls, summary.triples
    );

    pipeline.construct_chains()?;
    pipeline.answer()?;
    let report = pipeline.evaluate()?;
    println!(
        "evaluate: em {:.3}, f1 {:.3} over {} questions",
        report.em, report.f1, report.n
    );

    let out_dir = dir.path().join("out");
    println!("\nartifacts:");
    for entry in std::fs::read_dir(&out_dir)? {
        let entry = entry?;
        println!(
            "  {} ({} bytes)",
            entry.file_name().to_string_lossy(),
            entry.metadata()?.len()
        );
    }

    // Second run: every document hits the triple cache, the generator
    // backend is never called for extraction.
    let pipeline = Pipeline::new(load_config(dir.path().join("config.json"), &[])?)?;
    let summary = pipeline.build_kg()?;
    println!(
        "\nwarm build-kg: {} cache hits, {} generator calls",
        summary.cache_hits, summary.generator_calls
    );

    Ok(())
}
