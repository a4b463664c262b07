//! Builds a lattice from a handful of completions and prints its nodes,
//! each generation's path, and the summary stats. Pass `--json` to print the
//! export document instead.

use tokenlattice::generation::RawGeneration;
use tokenlattice::lattice::DEFAULT_MERGE_THRESHOLD;
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::LatticeEngine;

const COMPLETIONS: &[&str] = &[
    "Barack Obama's presidency was marked by the Affordable Care Act.",
    "Barack Obama's presidency was marked by economic recovery.",
    "George W. Bush's presidency was marked by the war on terror.",
    "Abraham Lincoln led the nation through the Civil War.",
    "George W. Bush's presidency was defined by the response to 9/11.",
];

fn main() {
    let gens: Vec<RawGeneration> = COMPLETIONS
        .iter()
        .enumerate()
        .map(|(i, t)| RawGeneration::new(format!("g{i}"), "presidents", *t))
        .collect();
    let refs: Vec<&RawGeneration> = gens.iter().collect();
    let engine = LatticeEngine::default();
    let lattice = engine
        .lattice(SegmentationMode::Space, &refs, DEFAULT_MERGE_THRESHOLD)
        .expect("offline embedder")
        .lattice;

    if std::env::args().any(|a| a == "--json") {
        println!("{}", lattice.to_json());
        return;
    }
    for node in lattice.nodes() {
        println!(
            "{:>2}x  {:<36} {}",
            node.frequency,
            format!("{:?}", node.label),
            node.id
        );
    }
    println!();
    for (g, t) in lattice.traversals().iter().enumerate() {
        let labels: Vec<&str> = t.path().map(|n| lattice.node(n).label.as_str()).collect();
        println!("{}: {}", t.generation, labels.join(" | "));
        assert_eq!(lattice.reconstruct(g), COMPLETIONS[g]);
    }
    println!();
    println!("{:#?}", lattice.stats());
}
