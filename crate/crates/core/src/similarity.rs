//! Token-pair similarity and the sorted candidate table used for merging.
//!
//! A pair's score is the cosine of the two contextual token embeddings, or,
//! when both tokens are stopwords, the mean of the cosines of their previous
//! and next neighbors. The absolute index distance divided by
//! [`POSITION_PENALTY_SCALE`] is then subtracted. Where a stopword has no
//! neighbor on one side (sequence start or end), that side's cosine is the
//! bare-token cosine of the two stopwords.

use crate::embedding::{blend_context, context_window_text, dot, EmbeddingError, EmbeddingProvider};
use crate::segment::TokenSequence;
use crate::stopwords::StopwordList;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::Arc;

pub const POSITION_PENALTY_SCALE: f64 = 20.0;

/// Candidates below this score are not kept unless a lower threshold is
/// requested explicitly.
pub const DEFAULT_SCORE_FLOOR: f64 = 0.2;

pub fn positional_penalty(index_a: usize, index_b: usize) -> f64 {
    index_a.abs_diff(index_b) as f64 / POSITION_PENALTY_SCALE
}

/// Position of a token: generation ordinal within a corpus plus token index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenPos {
    pub generation: u32,
    pub index: u32,
}

impl TokenPos {
    pub fn new(generation: usize, index: usize) -> Self {
        Self {
            generation: generation as u32,
            index: index as u32,
        }
    }
}

/// Embeddings and stopword flags for every token of a corpus, computed once
/// so that any number of pair scores can be evaluated without provider calls.
pub struct PreparedTokens {
    dimension: usize,
    window: usize,
    provider_tag: Arc<str>,
    offsets: Vec<usize>,
    bare: Vec<f64>,
    contextual: Vec<f64>,
    /// Squared norms, one per token.
    bare_sq: Vec<f64>,
    ctx_sq: Vec<f64>,
    stop: Vec<bool>,
    /// Interned case-folded surfaces.
    folded: Vec<u32>,
}

impl PreparedTokens {
    pub fn prepare<P: EmbeddingProvider + ?Sized>(
        seqs: &[TokenSequence],
        provider: &P,
        stopwords: &StopwordList,
        window: usize,
    ) -> Result<Self, EmbeddingError> {
        let mut offsets = Vec::with_capacity(seqs.len() + 1);
        let mut total = 0;
        for seq in seqs {
            offsets.push(total);
            total += seq.len();
        }
        offsets.push(total);

        // Unique strings in first-seen order.
        let mut slot_of: HashMap<String, usize> = HashMap::new();
        let mut unique: Vec<String> = Vec::new();
        let mut intern = |s: String| -> usize {
            if let Some(&slot) = slot_of.get(&s) {
                return slot;
            }
            let slot = unique.len();
            slot_of.insert(s.clone(), slot);
            unique.push(s);
            slot
        };
        let mut bare_slot = Vec::with_capacity(total);
        let mut ctx_slot = Vec::with_capacity(total);
        for seq in seqs {
            for i in 0..seq.len() {
                bare_slot.push(intern(seq.surface(i).to_string()));
                ctx_slot.push(if window == 0 {
                    usize::MAX
                } else {
                    intern(context_window_text(seq, i, window))
                });
            }
        }

        let chunks: Vec<&[String]> = unique.chunks(512).collect();
        let embedded: Vec<Vec<crate::embedding::EmbeddingVector>> = chunks
            .par_iter()
            .map(|chunk| provider.embed_batch(chunk))
            .collect::<Result<_, _>>()?;
        let vectors: Vec<_> = embedded.into_iter().flatten().collect();

        let dimension = vectors.first().map_or(0, |v| v.dimension());
        let provider_tag: Arc<str> = vectors
            .first()
            .map_or_else(|| Arc::from(provider.name()), |v| Arc::clone(&v.provider_tag));
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != dimension) {
            return Err(EmbeddingError::DimensionMismatch {
                left: dimension,
                right: bad.dimension(),
            });
        }

        let mut bare = Vec::with_capacity(total * dimension);
        let mut contextual = Vec::with_capacity(total * dimension);
        for t in 0..total {
            let b = &vectors[bare_slot[t]].values;
            bare.extend_from_slice(b);
            if window == 0 {
                contextual.extend_from_slice(b);
            } else {
                contextual.extend(blend_context(b, &vectors[ctx_slot[t]].values));
            }
        }

        let bare_sq = bare.chunks(dimension.max(1)).map(|v| dot(v, v)).collect();
        let ctx_sq = contextual.chunks(dimension.max(1)).map(|v| dot(v, v)).collect();

        let mut stop = Vec::with_capacity(total);
        let mut folded = Vec::with_capacity(total);
        let mut fold_ids: HashMap<String, u32> = HashMap::new();
        for seq in seqs {
            for token in &seq.tokens {
                stop.push(stopwords.contains(&token.surface));
                let next = fold_ids.len() as u32;
                folded.push(*fold_ids.entry(token.surface.to_lowercase()).or_insert(next));
            }
        }

        Ok(Self {
            dimension,
            window,
            provider_tag,
            offsets,
            bare,
            contextual,
            bare_sq,
            ctx_sq,
            stop,
            folded,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn generation_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn generation_len(&self, generation: usize) -> usize {
        self.offsets[generation + 1] - self.offsets[generation]
    }

    pub fn token_count(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    fn flat(&self, pos: TokenPos) -> usize {
        self.offsets[pos.generation as usize] + pos.index as usize
    }

    fn bare_vec(&self, flat: usize) -> &[f64] {
        &self.bare[flat * self.dimension..(flat + 1) * self.dimension]
    }

    fn ctx_vec(&self, flat: usize) -> &[f64] {
        &self.contextual[flat * self.dimension..(flat + 1) * self.dimension]
    }

    /// Same arithmetic as `cosine_values`, with the norms looked up.
    fn cos(a: &[f64], na: f64, b: &[f64], nb: f64) -> f64 {
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot(a, b) / (na * nb).sqrt()).clamp(-1.0, 1.0)
    }

    fn cos_bare(&self, fa: usize, fb: usize) -> f64 {
        Self::cos(self.bare_vec(fa), self.bare_sq[fa], self.bare_vec(fb), self.bare_sq[fb])
    }

    fn cos_ctx(&self, fa: usize, fb: usize) -> f64 {
        Self::cos(self.ctx_vec(fa), self.ctx_sq[fa], self.ctx_vec(fb), self.ctx_sq[fb])
    }

    pub fn is_stopword(&self, pos: TokenPos) -> bool {
        self.stop[self.flat(pos)]
    }

    /// Pair score without any shortcut.
    pub fn similarity(&self, a: TokenPos, b: TokenPos) -> f64 {
        let fa = self.flat(a);
        let fb = self.flat(b);
        let base = if self.stop[fa] && self.stop[fb] {
            let len_a = self.generation_len(a.generation as usize) as u32;
            let len_b = self.generation_len(b.generation as usize) as u32;
            let bare = || self.cos_bare(fa, fb);
            let prev = if a.index > 0 && b.index > 0 {
                self.cos_ctx(fa - 1, fb - 1)
            } else {
                bare()
            };
            let next = if a.index + 1 < len_a && b.index + 1 < len_b {
                self.cos_ctx(fa + 1, fb + 1)
            } else {
                bare()
            };
            (prev + next) / 2.0
        } else {
            self.cos_ctx(fa, fb)
        };
        base - positional_penalty(a.index as usize, b.index as usize)
    }

    /// Score used when merging: identical (case-folded) non-stopword
    /// surfaces skip the embeddings and score `1 - penalty`.
    pub fn merge_score(&self, a: TokenPos, b: TokenPos) -> f64 {
        let fa = self.flat(a);
        let fb = self.flat(b);
        if !self.stop[fa] && !self.stop[fb] && self.folded[fa] == self.folded[fb] {
            return 1.0 - positional_penalty(a.index as usize, b.index as usize);
        }
        self.similarity(a, b)
    }
}

/// Similarity of two token positions, each given as (sequence, index).
pub fn token_similarity<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    stopwords: &StopwordList,
    a: (&TokenSequence, usize),
    b: (&TokenSequence, usize),
    window: usize,
) -> Result<f64, EmbeddingError> {
    for (seq, index) in [a, b] {
        if index >= seq.len() {
            return Err(EmbeddingError::IndexOutOfRange { index, len: seq.len() });
        }
    }
    let prepared = PreparedTokens::prepare(&[a.0.clone(), b.0.clone()], provider, stopwords, window)?;
    Ok(prepared.similarity(TokenPos::new(0, a.1), TokenPos::new(1, b.1)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub a: TokenPos,
    pub b: TokenPos,
    pub score: f64,
}

/// All cross-generation token pairs scoring at least `floor`, sorted by
/// descending score, ties broken by the positions of the first then second
/// member.
#[derive(Clone, Debug)]
pub struct ScoreTable {
    floor: f64,
    candidates: Vec<Candidate>,
    lengths: Vec<usize>,
}

impl ScoreTable {
    pub fn compute(prepared: &PreparedTokens, floor: f64) -> Self {
        Self::compute_with(prepared, floor, |a, b| prepared.merge_score(a, b))
    }

    pub fn compute_with(
        prepared: &PreparedTokens,
        floor: f64,
        score: impl Fn(TokenPos, TokenPos) -> f64 + Sync,
    ) -> Self {
        let gens = prepared.generation_count();
        // Pairs with |Δidx| ≥ 20 can never score above 0; tighter when the
        // floor is positive since score ≤ 1 - penalty.
        let reach = if floor > 0.0 {
            ((1.0 - floor) * POSITION_PENALTY_SCALE + 1e-9).floor().max(0.0) as usize
        } else {
            POSITION_PENALTY_SCALE as usize - 1
        }
        .min(POSITION_PENALTY_SCALE as usize - 1);

        let lengths: Vec<usize> = (0..gens).map(|g| prepared.generation_len(g)).collect();
        let sources: Vec<TokenPos> = (0..gens)
            .flat_map(|g| (0..lengths[g]).map(move |i| TokenPos::new(g, i)))
            .collect();

        let mut candidates: Vec<Candidate> = sources
            .par_iter()
            .flat_map_iter(|&a| {
                let ai = a.index as usize;
                let lengths = &lengths;
                let score = &score;
                (a.generation as usize + 1..gens).flat_map(move |gb| {
                    let lo = ai.saturating_sub(reach);
                    let hi = (ai + reach + 1).min(lengths[gb]);
                    (lo..hi).filter_map(move |bi| {
                        let b = TokenPos::new(gb, bi);
                        let s = score(a, b);
                        (s >= floor).then_some(Candidate { a, b, score: s })
                    })
                })
            })
            .collect();

        candidates.par_sort_unstable_by(|x, y| y.score.total_cmp(&x.score).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));
        Self {
            floor,
            candidates,
            lengths,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Whether the table was built for a corpus with these sequence lengths.
    pub fn matches(&self, lengths: &[usize]) -> bool {
        self.lengths == lengths
    }

    /// Sorted candidates scoring at least `threshold`. Only complete when
    /// `threshold >= floor`.
    pub fn candidates_at(&self, threshold: f64) -> &[Candidate] {
        let end = self.candidates.partition_point(|c| c.score >= threshold);
        &self.candidates[..end]
    }

    pub fn all(&self) -> &[Candidate] {
        &self.candidates
    }
}
