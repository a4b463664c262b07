use super::ClientError;
use crate::generation::{ProviderMeta, RawGeneration};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::path::Path;

#[derive(Deserialize)]
struct Record {
    text: String,
    #[serde(default)]
    prompt_id: Option<String>,
    #[serde(default)]
    meta: Option<serde_json::Value>,
}

/// Reads one completion per record.
///
/// Files ending in `.jsonl`/`.ndjson`, or whose first non-blank line starts
/// with `{`, are read as JSON lines (`{"text", "prompt_id"?, "meta"?}`);
/// anything else as plain text, one completion per line. Blank lines are
/// skipped. Ids are `<file digest>:<line number>`.
pub fn import_corpus(path: impl AsRef<Path>, prompt_id: &str) -> Result<Vec<RawGeneration>, ClientError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let jsonl = matches!(ext, "jsonl" | "ndjson") || looks_like_jsonl(&content);
    parse_corpus(&content, prompt_id, jsonl)
}

/// True when the first non-blank line starts with `{`.
pub fn looks_like_jsonl(content: &str) -> bool {
    content
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'))
}

pub fn parse_corpus(content: &str, prompt_id: &str, jsonl: bool) -> Result<Vec<RawGeneration>, ClientError> {
    let digest = hex::encode(&Sha256::digest(content.as_bytes())[..8]);
    let mut out = Vec::new();
    for (i, raw) in content.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let id = format!("{digest}:{}", i + 1);
        let generation = if jsonl {
            let record: Record = serde_json::from_str(line).map_err(|e| ClientError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let meta = record.meta.map(|m| meta_from(&m)).unwrap_or_default();
            RawGeneration {
                id,
                prompt_id: record.prompt_id.unwrap_or_else(|| prompt_id.to_string()),
                text: record.text,
                provider_meta: meta,
            }
        } else {
            RawGeneration::new(id, prompt_id, line)
        };
        out.push(generation);
    }
    Ok(out)
}

fn meta_from(v: &serde_json::Value) -> ProviderMeta {
    ProviderMeta {
        model_id: v
            .get("model_id")
            .and_then(|x| x.as_str())
            .unwrap_or_default()
            .to_string(),
        temperature: v.get("temperature").and_then(|x| x.as_f64()).unwrap_or_default(),
        sample_index: v.get("sample_index").and_then(|x| x.as_u64()).unwrap_or_default() as usize,
    }
}
