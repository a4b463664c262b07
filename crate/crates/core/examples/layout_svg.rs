//! Lays out a lattice and writes an SVG.
//!
//!     cargo run --example layout_svg -- out.svg [lambda] [longtail]

use tokenlattice::generation::RawGeneration;
use tokenlattice::layout::{compute_layout, render_svg, LayoutParams, SvgOptions};
use tokenlattice::segment::SegmentationMode;
use tokenlattice::session::LatticeEngine;

const COMPLETIONS: &[&str] = &[
    "Once upon a time there was a brave knight who lived in a castle.",
    "Once upon a time there was a young girl who lived in a forest.",
    "Once upon a time there lived a wise old king.",
    "Once upon a time, in a faraway land, there lived a dragon.",
    "Long ago there was a brave knight who fought a dragon.",
    "Once upon a time there was a brave princess who lived in a tower.",
];

fn main() {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "lattice.svg".into());
    let lambda: f64 = args.next().map(|s| s.parse().expect("lambda")).unwrap_or(0.5);
    let longtail: f64 = args.next().map(|s| s.parse().expect("longtail")).unwrap_or(0.0);

    let gens: Vec<RawGeneration> = COMPLETIONS
        .iter()
        .enumerate()
        .map(|(i, t)| RawGeneration::new(format!("g{i}"), "story", *t))
        .collect();
    let refs: Vec<&RawGeneration> = gens.iter().collect();
    let lattice = LatticeEngine::default()
        .lattice(SegmentationMode::Space, &refs, 0.5)
        .expect("offline embedder")
        .lattice;

    let params = LayoutParams {
        lambda,
        longtail,
        ..LayoutParams::default()
    };
    let layout = compute_layout(&lattice, &params).expect("valid params");
    println!(
        "{} nodes, converged={} after {} iterations, min overlap metric {:.4}",
        layout.nodes.len(),
        layout.converged,
        layout.iterations_used,
        layout.min_overlap_metric()
    );
    std::fs::write(&out, render_svg(&layout, &SvgOptions::default())).expect("write svg");
    println!("wrote {out}");
}
