//! Sampling completions from chat-completion providers, with a
//! content-addressed cache so repeated requests never touch the network.

mod cache;
mod corpus;
mod openai;

pub use cache::DiskCache;
pub use corpus::{import_corpus, looks_like_jsonl, parse_corpus};
pub use openai::{OpenAiChatProvider, OpenAiConfig, API_KEY_ENV, BASE_URL_ENV, CACHE_DIR_ENV, MODEL_ENV};

use crate::generation::{ProviderMeta, RawGeneration};
use crate::retry::{Attempt, RetryPolicy};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub model_id: String,
    pub temperature: f64,
    pub n: usize,
    #[serde(default)]
    pub client_seed: Option<u64>,
    /// Provider endpoint identity; part of the cache key.
    #[serde(default)]
    pub provider: String,
}

impl GenerationRequest {
    pub fn new(prompt_text: impl Into<String>, model_id: impl Into<String>, temperature: f64, n: usize) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            model_id: model_id.into(),
            temperature,
            n,
            client_seed: None,
            provider: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        if self.n == 0 {
            return Err(ClientError::InvalidRequest("n must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::InvalidRequest(
                "temperature must be a non-negative number".into(),
            ));
        }
        Ok(())
    }

    pub fn cache_key(&self) -> CacheKey {
        let mut h = Sha256::new();
        for part in [&self.prompt_text, &self.model_id, &self.provider] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update(self.temperature.to_bits().to_le_bytes());
        h.update((self.n as u64).to_le_bytes());
        match self.client_seed {
            Some(seed) => {
                h.update([1]);
                h.update(seed.to_le_bytes());
            }
            None => h.update([0]),
        }
        CacheKey(hex::encode(h.finalize()))
    }
}

/// SHA-256 of every request field, hex encoded.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CacheKey(pub String);

impl CacheKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Prefix used in generation ids.
    pub fn short(&self) -> &str {
        &self.0[..16.min(self.0.len())]
    }
}

impl fmt::Display for CacheKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Failure of one provider call.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("HTTP {status}: {message}")]
    Status { status: u16, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("provider rejected the request (HTTP {status}): {message}")]
    Configuration { status: u16, message: String },
    #[error("provider unreachable after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned {} of {expected} completions: {message}", completed.len())]
    PartialBatch {
        completed: Vec<RawGeneration>,
        expected: usize,
        message: String,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClientError {
    /// Failures caused by something outside this process.
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            Self::Configuration { .. } | Self::Transport { .. } | Self::PartialBatch { .. }
        )
    }
}

/// Anything that can return completions for a prompt.
pub trait CompletionProvider: Send + Sync {
    /// Stable identity used in cache keys, e.g. the endpoint URL.
    fn endpoint(&self) -> &str;

    /// Requests up to `n` completions. Returning fewer is allowed; the
    /// sampler asks again for the remainder.
    fn complete(&self, request: &GenerationRequest, n: usize) -> Result<Vec<String>, ProviderError>;
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn endpoint(&self) -> &str {
        (**self).endpoint()
    }

    fn complete(&self, request: &GenerationRequest, n: usize) -> Result<Vec<String>, ProviderError> {
        (**self).complete(request, n)
    }
}

type Flight = Arc<Mutex<()>>;

/// Samples through a provider, consulting the cache first.
///
/// Results are stored only once a full batch of `n` has arrived, so a retry
/// after a failure is always safe. Concurrent calls with the same key wait
/// for the first one instead of calling the provider again.
pub struct Sampler<P> {
    provider: P,
    cache: Option<DiskCache>,
    memory: Mutex<HashMap<CacheKey, Vec<RawGeneration>>>,
    flights: Mutex<HashMap<CacheKey, Flight>>,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl<P: CompletionProvider> Sampler<P> {
    pub fn new(provider: P) -> Self {
        Self {
            provider,
            cache: None,
            memory: Mutex::default(),
            flights: Mutex::default(),
            retry: RetryPolicy::default(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: DiskCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    /// Provider calls made so far, retries included.
    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Fills in the provider field from this sampler's provider.
    pub fn request(
        &self,
        prompt_text: impl Into<String>,
        model_id: impl Into<String>,
        temperature: f64,
        n: usize,
    ) -> GenerationRequest {
        GenerationRequest {
            provider: self.provider.endpoint().to_string(),
            ..GenerationRequest::new(prompt_text, model_id, temperature, n)
        }
    }

    pub fn sample(&self, request: &GenerationRequest, prompt_id: &str) -> Result<Vec<RawGeneration>, ClientError> {
        request.validate()?;
        let key = request.cache_key();
        let flight = {
            let mut flights = self.flights.lock().unwrap_or_else(|e| e.into_inner());
            Arc::clone(flights.entry(key.clone()).or_default())
        };
        let _guard = flight.lock().unwrap_or_else(|e| e.into_inner());

        if let Some(hit) = self.lookup(&key)? {
            return Ok(with_prompt(hit, prompt_id));
        }
        let texts = self.fetch(request, &key, prompt_id)?;
        let generations = build(&key, request, prompt_id, texts);
        if let Some(cache) = &self.cache {
            cache.store(&key, request, &generations)?;
        }
        self.memory
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, generations.clone());
        Ok(generations)
    }

    fn lookup(&self, key: &CacheKey) -> Result<Option<Vec<RawGeneration>>, ClientError> {
        if let Some(hit) = self.memory.lock().unwrap_or_else(|e| e.into_inner()).get(key) {
            return Ok(Some(hit.clone()));
        }
        match &self.cache {
            Some(cache) => cache.load(key),
            None => Ok(None),
        }
    }

    fn fetch(&self, request: &GenerationRequest, key: &CacheKey, prompt_id: &str) -> Result<Vec<String>, ClientError> {
        let mut texts: Vec<String> = Vec::with_capacity(request.n);
        while texts.len() < request.n {
            let want = request.n - texts.len();
            let outcome = self.retry.run(|_| {
                self.calls.fetch_add(1, Ordering::SeqCst);
                match self.provider.complete(request, want) {
                    Ok(batch) if batch.is_empty() => Attempt::Fail(ProviderError::Malformed("no completions".into())),
                    Ok(batch) => Attempt::Done(batch),
                    Err(e @ ProviderError::Status { status, .. }) if (400..500).contains(&status) => Attempt::Fail(e),
                    Err(e @ ProviderError::Malformed(_)) => Attempt::Fail(e),
                    Err(e) => Attempt::Retry(e),
                }
            });
            match outcome {
                Ok(batch) => texts.extend(batch.into_iter().take(want)),
                Err((err, attempts)) => {
                    if !texts.is_empty() {
                        let expected = request.n;
                        return Err(ClientError::PartialBatch {
                            completed: build(key, request, prompt_id, texts),
                            expected,
                            message: err.to_string(),
                        });
                    }
                    return Err(match err {
                        ProviderError::Status { status, message } if (400..500).contains(&status) => {
                            ClientError::Configuration { status, message }
                        }
                        other => ClientError::Transport {
                            attempts,
                            message: other.to_string(),
                        },
                    });
                }
            }
        }
        Ok(texts)
    }
}

fn build(key: &CacheKey, request: &GenerationRequest, prompt_id: &str, texts: Vec<String>) -> Vec<RawGeneration> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| RawGeneration {
            id: format!("{}:{i}", key.short()),
            prompt_id: prompt_id.to_string(),
            text,
            provider_meta: ProviderMeta {
                model_id: request.model_id.clone(),
                temperature: request.temperature,
                sample_index: i,
            },
        })
        .collect()
}

fn with_prompt(mut gens: Vec<RawGeneration>, prompt_id: &str) -> Vec<RawGeneration> {
    for g in &mut gens {
        g.prompt_id = prompt_id.to_string();
    }
    gens
}

/// Canned completions, cycling through a fixed list. Useful offline and in
/// tests.
#[derive(Debug, Clone)]
pub struct FixtureProvider {
    endpoint: String,
    texts: Vec<String>,
    next: Arc<AtomicUsize>,
}

impl FixtureProvider {
    pub fn new<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self {
            endpoint: "fixture".into(),
            texts: texts.into_iter().map(Into::into).collect(),
            next: Arc::new(AtomicUsize::new(0)),
        }
    }
}

impl CompletionProvider for FixtureProvider {
    fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn complete(&self, _request: &GenerationRequest, n: usize) -> Result<Vec<String>, ProviderError> {
        if self.texts.is_empty() {
            return Err(ProviderError::Malformed("fixture has no texts".into()));
        }
        Ok((0..n)
            .map(|_| {
                let i = self.next.fetch_add(1, Ordering::SeqCst);
                self.texts[i % self.texts.len()].clone()
            })
            .collect())
    }
}
