//! Splits one completion three ways and checks that each split rebuilds
//! the original text byte for byte.

use tokenlattice::segment::{reconstruct, segment, SegmentationMode};

fn main() {
    let text = "  Paris is the capital of France. It sits on the Seine, which flows west; the city is old.\n";
    for mode in SegmentationMode::ALL {
        let seq = segment(text, mode);
        println!("{mode}: {} tokens", seq.len());
        for t in &seq.tokens {
            println!("  [{}] {:?} + {:?}", t.index, t.surface, t.trailing_separator);
        }
        assert_eq!(reconstruct(&seq), text);
    }
}
