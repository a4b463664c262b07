use serde::{Deserialize, Serialize};

/// Where a sampled completion came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProviderMeta {
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub sample_index: usize,
}

/// One sampled completion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawGeneration {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    #[serde(default)]
    pub provider_meta: ProviderMeta,
}

impl RawGeneration {
    pub fn new(id: impl Into<String>, prompt_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            prompt_id: prompt_id.into(),
            text: text.into(),
            provider_meta: ProviderMeta::default(),
        }
    }
}
