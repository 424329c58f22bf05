//! Construct reasoning chains over a question-local knowledge graph.
//!
//! Chains grow autoregressively. Each step embeds the question together
//! with the triples already chosen, ranks the graph for the nearest
//! candidates, and asks the selector model a multiple-choice question:
//! option A terminates the chain, the other labels name candidate
//! triples. Beam search keeps the highest-probability hypotheses; a
//! chain's score is the product of its selection probabilities.
//!
//! Run with: cargo run --example construct_chains

use std::path::Path;

use anyhow::Result;
use trace::chain::{construct_chains, ChainConfig};
use trace::corpus::demos::{DemoIndex, DemoKind, DemoStore};
use trace::kg::{assemble_question_kg, KgGenConfig, KgGenerator};
use trace::{load_dataset, DatasetFormat, ScriptedBackend};

fn main() -> Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic");
    let backend = ScriptedBackend::from_path(fixtures.join("script.json"))?;
    let (items, _) = load_dataset(fixtures.join("dataset.json"), DatasetFormat::Hotpotqa)?;

    let kg_demos = DemoIndex::build(DemoStore::empty(DemoKind::KgGeneration), &backend)?;
    let chain_demos = DemoIndex::build(DemoStore::empty(DemoKind::ChainConstruction), &backend)?;
    let generator = KgGenerator::new(&backend, &backend, &kg_demos, KgGenConfig::default());

    let config = ChainConfig {
        max_len: 2,        // L: at most two triples per chain
        num_chains: 2,     // R: hypotheses kept in the beam
        beam_width: 2,     // b: triple expansions per live hypothesis
        num_candidates: 4, // K: candidates offered per step
        num_demos: 0,
        ..ChainConfig::default()
    };

    for item in &items {
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

        println!("question: {}", item.question);
        for (i, chain) in chains.iter().enumerate() {
            let status = if chain.terminated { "terminated" } else { "open" };
            println!(
                "  chain {} (score {:.4}, labels {:?}, {status})",
                i + 1,
                chain.score,
                chain.labels
            );
            for triple in &chain.triples {
                println!("    {}", triple.render());
            }
        }
        println!();
    }

    Ok(())
}
