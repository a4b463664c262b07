use super::{normalize_in_place, EmbeddingError, EmbeddingProvider, EmbeddingVector};
use std::sync::Arc;

const DIMENSION: usize = 64;
const SEED: u64 = 0x7a3c_5e11_94d2_0b6f;
const BEGIN: char = '\u{2}';
const END: char = '\u{3}';

/// Deterministic offline embedder.
///
/// The lowercased input is wrapped in boundary markers and cut into
/// character trigrams. Each trigram seeds a splitmix64 stream that yields a
/// fixed pseudo-random direction in 64 dimensions; the directions are summed
/// and L2-normalized. Only integer arithmetic, IEEE addition, multiplication
/// and square root are involved, so vectors are bit-identical everywhere.
#[derive(Clone, Debug)]
pub struct FallbackEmbedder {
    tag: Arc<str>,
}

impl Default for FallbackEmbedder {
    fn default() -> Self {
        Self {
            tag: Arc::from("fallback-trigram-64"),
        }
    }
}

impl FallbackEmbedder {
    pub fn vector(&self, input: &str) -> Vec<f64> {
        let chars: Vec<char> = std::iter::once(BEGIN)
            .chain(input.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(END))
            .collect();
        let mut acc = vec![0.0f64; DIMENSION];
        let mut buf = [0u8; 12];
        for gram in chars.windows(3) {
            let mut hash = fnv1a(SEED.to_le_bytes().as_slice(), 0xcbf2_9ce4_8422_2325);
            for c in gram {
                hash = fnv1a(c.encode_utf8(&mut buf).as_bytes(), hash);
            }
            let mut state = hash;
            for slot in acc.iter_mut() {
                *slot += unit_uniform(splitmix64(&mut state));
            }
        }
        normalize_in_place(&mut acc);
        acc
    }
}

impl EmbeddingProvider for FallbackEmbedder {
    fn name(&self) -> &str {
        &self.tag
    }

    fn dimension(&self) -> usize {
        DIMENSION
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        Ok(inputs
            .iter()
            .map(|s| EmbeddingVector {
                values: self.vector(s),
                provider_tag: Arc::clone(&self.tag),
            })
            .collect())
    }
}

fn fnv1a(bytes: &[u8], mut hash: u64) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps the top 53 bits to `[-1, 1)`.
fn unit_uniform(x: u64) -> f64 {
    ((x >> 11) as f64) * (2.0 / (1u64 << 53) as f64) - 1.0
}
