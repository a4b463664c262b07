//! Imports a corpus (JSON lines or one completion per line) and shows how the
//! lattice summary changes across merge thresholds.
//!
//!     cargo run --example corpus_stats -- completions.jsonl [phrase]

use tokenlattice::client::import_corpus;
use tokenlattice::generation::RawGeneration;
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::LatticeEngine;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let gens = match args.next() {
        Some(path) => import_corpus(&path, "corpus")?,
        None => [
            "red apples are sweet",
            "green apples are sour",
            "red cherries are sweet",
            "bananas are yellow",
        ]
        .iter()
        .enumerate()
        .map(|(i, t)| RawGeneration::new(format!("g{i}"), "corpus", *t))
        .collect(),
    };
    let mode: SegmentationMode = args.next().as_deref().unwrap_or("space").parse()?;
    let refs: Vec<&RawGeneration> = gens.iter().collect();
    let engine = LatticeEngine::default();

    println!("{} generations, mode {mode}", gens.len());
    println!(
        "{:>9} {:>6} {:>9} {:>11} {:>8}",
        "threshold", "nodes", "clusters", "compression", "paths"
    );
    for threshold in [0.9, 0.8, 0.65, 0.5, 0.35, 0.2] {
        let s = engine.lattice(mode, &refs, threshold)?.lattice.stats();
        println!(
            "{threshold:>9} {:>6} {:>9} {:>11.3} {:>8}",
            s.node_count, s.token_cluster_count, s.compression_ratio, s.distinct_path_count
        );
    }
    Ok(())
}
