use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::retry::{Attempt, RetryPolicy};
use serde::{Deserialize, Serialize};
use std::sync::Arc;
use std::time::Duration;

/// Default model identifier sent to remote embedding servers.
pub const DEFAULT_REMOTE_MODEL: &str = "Xenova/all-MiniLM-L6-v2";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_model() -> String {
    DEFAULT_REMOTE_MODEL.to_string()
}

fn default_batch() -> usize {
    256
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl RemoteEmbedderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: default_model(),
            batch_size: default_batch(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout_ms(),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    inputs: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// HTTP client for `POST {model, inputs} -> {vectors}` embedding servers.
///
/// The dimension is learned from the first response; every later response
/// must agree with it.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    tag: Arc<str>,
    agent: ureq::Agent,
    dimension: std::sync::OnceLock<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .build()
            .into();
        let tag = Arc::from(format!("remote:{}", config.model));
        Self {
            config,
            tag,
            agent,
            dimension: std::sync::OnceLock::new(),
        }
    }

    fn error(&self, message: String, retryable: bool, attempts: u32) -> EmbeddingError {
        EmbeddingError::Provider {
            provider: self.tag.to_string(),
            message,
            retryable,
            attempts,
            retry_after: retryable.then(|| self.config.retry.backoff(attempts)),
        }
    }

    fn post(&self, inputs: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let body = EmbedRequest {
            model: &self.config.model,
            inputs,
        };
        let result = self
            .config
            .retry
            .run(|_| match self.agent.post(&self.config.endpoint).send_json(&body) {
                Ok(mut response) => match response.body_mut().read_json::<EmbedResponse>() {
                    Ok(parsed) => Attempt::Done(parsed.vectors),
                    Err(err) => Attempt::Fail((format!("malformed response: {err}"), false)),
                },
                Err(ureq::Error::StatusCode(code)) if (400..500).contains(&code) => {
                    Attempt::Fail((format!("HTTP {code}"), false))
                }
                Err(ureq::Error::StatusCode(code)) => Attempt::Retry((format!("HTTP {code}"), true)),
                Err(err) => Attempt::Retry((err.to_string(), true)),
            });
        let vectors = result.map_err(|((message, retryable), attempts)| self.error(message, retryable, attempts))?;
        if vectors.len() != inputs.len() {
            return Err(self.error(
                format!("expected {} vectors, got {}", inputs.len(), vectors.len()),
                false,
                1,
            ));
        }
        Ok(vectors)
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn name(&self) -> &str {
        &self.tag
    }

    /// Zero until the first successful call.
    fn dimension(&self) -> usize {
        self.dimension.get().copied().unwrap_or(0)
    }

    fn embed_batch(&self, inputs: &[String]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(self.config.batch_size.max(1)) {
            for values in self.post(chunk)? {
                let expected = *self.dimension.get_or_init(|| values.len());
                if values.len() != expected {
                    return Err(EmbeddingError::DimensionMismatch {
                        left: expected,
                        right: values.len(),
                    });
                }
                out.push(EmbeddingVector {
                    values,
                    provider_tag: Arc::clone(&self.tag),
                });
            }
        }
        Ok(out)
    }
}
