use super::{CacheKey, ClientError, GenerationRequest};
use crate::generation::RawGeneration;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::{Path, PathBuf};

const RECORD_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Record {
    version: u32,
    key: CacheKey,
    request: GenerationRequest,
    generations: Vec<RawGeneration>,
}

/// One JSON file per request under `dir/ab/abcdef....json`.
#[derive(Clone, Debug)]
pub struct DiskCache {
    dir: PathBuf,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(&key.as_str()[..2]).join(format!("{key}.json"))
    }

    pub fn load(&self, key: &CacheKey) -> Result<Option<Vec<RawGeneration>>, ClientError> {
        let path = self.path_for(key);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let record: Record =
            serde_json::from_slice(&bytes).map_err(|e| ClientError::Cache(format!("{}: {e}", path.display())))?;
        if record.version != RECORD_VERSION || &record.key != key {
            return Err(ClientError::Cache(format!(
                "{}: key or version mismatch",
                path.display()
            )));
        }
        Ok(Some(record.generations))
    }

    /// Writes atomically: readers see either no file or the whole record.
    pub fn store(
        &self,
        key: &CacheKey,
        request: &GenerationRequest,
        generations: &[RawGeneration],
    ) -> Result<(), ClientError> {
        let path = self.path_for(key);
        let parent = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent)?;
        let record = Record {
            version: RECORD_VERSION,
            key: key.clone(),
            request: request.clone(),
            generations: generations.to_vec(),
        };
        let body = serde_json::to_vec_pretty(&record).map_err(|e| ClientError::Cache(e.to_string()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(parent)?;
        tmp.write_all(&body)?;
        tmp.persist(&path).map_err(|e| ClientError::Io(e.error))?;
        Ok(())
    }
}
