//! Token embeddings and the pluggable provider contract.
//!
//! A provider maps strings to fixed-length vectors. Two implementations ship:
//! [`FallbackEmbedder`], a pure hashed-trigram projection that needs no
//! network or model weights, and [`RemoteEmbedder`], which talks to any
//! server speaking the `{model, inputs} -> {vectors}` JSON contract.
//!
//! Contextual token embeddings are built by [`embed_in_context`]: the bare
//! token vector is summed with the vector of its surrounding window and the
//! result is renormalized, so the token's own identity and its neighborhood
//! both contribute.

mod fallback;
mod remote;

pub use fallback::FallbackEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, DEFAULT_REMOTE_MODEL};

use crate::segment::TokenSequence;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Default number of neighbor tokens taken on each side of a token.
pub const DEFAULT_CONTEXT_WINDOW: usize = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_tag: Arc<str>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_tag: impl Into<Arc<str>>) -> Self {
        Self {
            values,
            provider_tag: provider_tag.into(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbeddingError {
    #[error("embedding provider `{provider}` failed after {attempts} attempt(s): {message}")]
    Provider {
        provider: String,
        message: String,
        retryable: bool,
        attempts: u32,
        retry_after: Option<Duration>,
    },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("provider mismatch: `{left}` vs `{right}`")]
    ProviderMismatch { left: String, right: String },
    #[error("cosine of a zero vector is undefined")]
    ZeroVector,
    #[error("token index {index} out of range for sequence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

/// A source of embeddings. Implementations must be deterministic: the same
/// string always maps to the same vector within one instance.
pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    /// Embeds every input, returning vectors in input order.
    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError>;

    fn embed(&self, input: &str) -> Result<EmbeddingVector, EmbeddingError> {
        let mut out = self.embed_batch(&[input.to_string()])?;
        out.pop().ok_or_else(|| EmbeddingError::Provider {
            provider: self.name().to_string(),
            message: "empty response".into(),
            retryable: false,
            attempts: 1,
            retry_after: None,
        })
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Arc<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        (**self).embed_batch(inputs)
    }
}

/// Memoizing wrapper; repeated strings never reach the inner provider twice.
pub struct CachedProvider<P> {
    inner: P,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<P: EmbeddingProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn cached_len(&self) -> usize {
        self.memo.lock().expect("embedding memo poisoned").len()
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedProvider<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let missing: Vec<String> = {
            let memo = self.memo.lock().expect("embedding memo poisoned");
            let mut seen = std::collections::HashSet::new();
            inputs
                .iter()
                .filter(|s| !memo.contains_key(*s) && seen.insert(s.as_str()))
                .cloned()
                .collect()
        };
        if !missing.is_empty() {
            let fresh = self.inner.embed_batch(&missing)?;
            let mut memo = self.memo.lock().expect("embedding memo poisoned");
            for (text, vector) in missing.into_iter().zip(fresh) {
                memo.insert(text, vector);
            }
        }
        let memo = self.memo.lock().expect("embedding memo poisoned");
        Ok(inputs.iter().map(|s| memo[s].clone()).collect())
    }
}

/// Four-lane accumulation so the loop vectorizes.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: a.dimension(),
            right: b.dimension(),
        });
    }
    if a.provider_tag != b.provider_tag {
        return Err(EmbeddingError::ProviderMismatch {
            left: a.provider_tag.to_string(),
            right: b.provider_tag.to_string(),
        });
    }
    cosine_values(&a.values, &b.values).ok_or(EmbeddingError::ZeroVector)
}

pub(crate) fn cosine_values(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(a, b) / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Sequential sum, so stored vectors do not depend on `dot`'s lane order.
pub(crate) fn normalize_in_place(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

/// Surfaces of the token and up to `window` neighbors per side, joined by a
/// single space.
pub fn context_window_text(seq: &TokenSequence, index: usize, window: usize) -> String {
    let start = index.saturating_sub(window);
    let end = (index + window + 1).min(seq.len());
    seq.tokens[start..end]
        .iter()
        .map(|t| t.surface.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Combines a bare token vector with its window vector.
pub(crate) fn blend_context(bare: &[f64], window: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = bare.iter().zip(window).map(|(a, b)| a + b).collect();
    normalize_in_place(&mut out);
    out
}

/// Context-aware embedding of `seq[index]`. With `window == 0` this is the
/// bare token embedding.
pub fn embed_in_context<P: EmbeddingProvider + ?Sized>(
    provider: &P,
    seq: &TokenSequence,
    index: usize,
    window: usize,
) -> Result<EmbeddingVector, EmbeddingError> {
    if index >= seq.len() {
        return Err(EmbeddingError::IndexOutOfRange { index, len: seq.len() });
    }
    let surface = seq.surface(index).to_string();
    if window == 0 {
        return provider.embed(&surface);
    }
    let context = context_window_text(seq, index, window);
    let mut both = provider.embed_batch(&[surface, context])?;
    let ctx = both.pop().expect("two vectors");
    let bare = both.pop().expect("two vectors");
    if bare.dimension() != ctx.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            left: bare.dimension(),
            right: ctx.dimension(),
        });
    }
    Ok(EmbeddingVector {
        values: blend_context(&bare.values, &ctx.values),
        provider_tag: bare.provider_tag,
    })
}
