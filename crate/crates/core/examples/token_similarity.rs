//! Pairwise token scores between two completions with the offline embedder.
//!
//! Scores are contextual cosine minus a positional penalty; pairs of
//! stopwords are compared through their neighbours instead.

use tokenlattice::embedding::{FallbackEmbedder, DEFAULT_CONTEXT_WINDOW};
use tokenlattice::segment::{segment, SegmentationMode};
use tokenlattice::similarity::{PreparedTokens, TokenPos};
use tokenlattice::stopwords::StopwordList;

fn main() {
    let a = segment("The quick brown fox jumps over the lazy dog", SegmentationMode::Space);
    let b = segment("A quick red fox leaps over the sleeping dog", SegmentationMode::Space);
    let stop = StopwordList::english();
    let prepared = PreparedTokens::prepare(
        &[a.clone(), b.clone()],
        &FallbackEmbedder::default(),
        stop,
        DEFAULT_CONTEXT_WINDOW,
    )
    .expect("fallback embedder never fails");

    print!("{:>10}", "");
    for t in &b.tokens {
        print!("{:>9}", t.surface);
    }
    println!();
    for (i, ta) in a.tokens.iter().enumerate() {
        print!("{:>10}", ta.surface);
        for j in 0..b.len() {
            print!(
                "{:>9.3}",
                prepared.merge_score(TokenPos::new(0, i), TokenPos::new(1, j))
            );
        }
        println!();
    }
}
