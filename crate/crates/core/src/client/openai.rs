use super::{CompletionProvider, GenerationRequest, ProviderError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::time::Duration;

pub const BASE_URL_ENV: &str = "TOKENLATTICE_BASE_URL";
pub const API_KEY_ENV: &str = "TOKENLATTICE_API_KEY";
pub const MODEL_ENV: &str = "TOKENLATTICE_MODEL";
pub const CACHE_DIR_ENV: &str = "TOKENLATTICE_CACHE_DIR";

#[derive(Clone, Serialize, Deserialize)]
pub struct OpenAiConfig {
    /// e.g. `https://api.openai.com/v1` or a local server's `/v1` root.
    pub base_url: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    120_000
}

impl std::fmt::Debug for OpenAiConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OpenAiConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("timeout_ms", &self.timeout_ms)
            .finish()
    }
}

impl OpenAiConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
        }
    }

    /// Base URL from `TOKENLATTICE_BASE_URL` (default the OpenAI API), key
    /// from `TOKENLATTICE_API_KEY` or `OPENAI_API_KEY`.
    pub fn from_env() -> Self {
        let base = std::env::var(BASE_URL_ENV).unwrap_or_else(|_| "https://api.openai.com/v1".into());
        let key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.is_empty());
        Self {
            api_key: key,
            ..Self::new(base)
        }
    }
}

/// Client for OpenAI-compatible `POST /chat/completions` endpoints.
pub struct OpenAiChatProvider {
    config: OpenAiConfig,
    url: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

impl OpenAiChatProvider {
    pub fn new(config: OpenAiConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        Self { config, url, agent }
    }
}

impl CompletionProvider for OpenAiChatProvider {
    fn endpoint(&self) -> &str {
        &self.url
    }

    fn complete(&self, request: &GenerationRequest, n: usize) -> Result<Vec<String>, ProviderError> {
        let mut body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt_text}],
            "temperature": request.temperature,
            "n": n,
        });
        if let Some(seed) = request.client_seed {
            body["seed"] = json!(seed);
        }
        let mut call = self.agent.post(&self.url);
        if let Some(key) = &self.config.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(&body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let text = response.body_mut().read_to_string().unwrap_or_default();
            let message: String = text.chars().take(500).collect();
            return Err(ProviderError::Status { status, message });
        }
        let parsed: ChatResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Malformed(e.to_string()))?;
        Ok(parsed
            .choices
            .into_iter()
            .map(|c| c.message.content.unwrap_or_default())
            .collect())
    }
}
