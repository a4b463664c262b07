use super::{CachedLattice, CachedLayout, LatticeEngine, PromptConfig, Session, SessionError, Snapshot, ViewState};
use crate::generation::RawGeneration;
use crate::lattice::{LatticeExport, TokenLattice};
use crate::layout::{LayoutExport, LayoutResult};
use crate::segment::SegmentationMode;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;

pub const SESSION_BUNDLE_VERSION: u32 = 1;

/// A cached lattice with the layouts computed for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub mode: SegmentationMode,
    pub threshold: f64,
    pub prompt_ids: Vec<String>,
    pub lattice: LatticeExport,
    /// Each carries its own parameters, including lambda and seed.
    #[serde(default)]
    pub layouts: Vec<LayoutExport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionBundle {
    pub version: u32,
    pub prompts: Vec<PromptConfig>,
    pub generations: Vec<RawGeneration>,
    pub view_state: ViewState,
    #[serde(default)]
    pub caches: Vec<CacheRecord>,
}

impl Session {
    pub fn to_bundle(&self) -> SessionBundle {
        let snap = self.current();
        let by_id: HashMap<&str, &RawGeneration> = snap.generations.iter().map(|g| (g.id.as_str(), g)).collect();
        let layouts = self.engine().cached_layouts();
        let mut caches = Vec::new();
        for entry in self.engine().cached_lattices() {
            // Skip entries built from generations this snapshot no longer has.
            let gens: Option<Vec<&RawGeneration>> = entry
                .lattice
                .generations()
                .iter()
                .map(|g| by_id.get(g.id.as_str()).copied())
                .collect();
            let Some(gens) = gens else { continue };
            if LatticeEngine::scope_key(entry.lattice.mode(), &gens) != entry.scope {
                continue;
            }
            let layouts = layouts
                .iter()
                .filter(|l| l.scope == entry.scope && l.threshold.to_bits() == entry.threshold.to_bits())
                .map(|l| LayoutExport::new(&l.layout, &l.params))
                .collect();
            caches.push(CacheRecord {
                mode: entry.lattice.mode(),
                threshold: entry.threshold,
                prompt_ids: entry.prompt_ids.clone(),
                lattice: entry.lattice.to_export(),
                layouts,
            });
        }
        caches.sort_by(|a, b| {
            (a.mode, &a.prompt_ids, a.threshold.to_bits()).cmp(&(b.mode, &b.prompt_ids, b.threshold.to_bits()))
        });
        SessionBundle {
            version: SESSION_BUNDLE_VERSION,
            prompts: snap.prompts.clone(),
            generations: snap.generations.clone(),
            view_state: snap.view.clone(),
            caches,
        }
    }

    /// Restores a session; cached lattices and layouts are validated and
    /// seeded into `engine` so the first views need no rebuild.
    pub fn from_bundle(bundle: SessionBundle, engine: Arc<LatticeEngine>) -> Result<Self, SessionError> {
        if bundle.version != SESSION_BUNDLE_VERSION {
            return Err(SessionError::InvalidArgument(format!(
                "unsupported session bundle version {}",
                bundle.version
            )));
        }
        let mut session = Session::new(engine);
        for p in &bundle.prompts {
            session.add_prompt(p.clone())?;
        }
        let mut by_prompt: Vec<(String, Vec<RawGeneration>)> = Vec::new();
        for g in bundle.generations {
            match by_prompt.iter_mut().find(|(p, _)| *p == g.prompt_id) {
                Some((_, v)) => v.push(g),
                None => by_prompt.push((g.prompt_id.clone(), vec![g])),
            }
        }
        for (prompt, gens) in by_prompt {
            session.add_generations(&prompt, gens)?;
        }
        let mut snap: Snapshot = (*session.current()).clone();
        snap.view = bundle.view_state;
        session.history = vec![Arc::new(snap)];

        let snap = session.current();
        let palette = snap.palette();
        let by_id: HashMap<&str, &RawGeneration> = snap.generations.iter().map(|g| (g.id.as_str(), g)).collect();
        for record in bundle.caches {
            let lattice = TokenLattice::from_export(&record.lattice)
                .map_err(|e| SessionError::InvalidArgument(format!("cached lattice: {e}")))?;
            let gens: Vec<&RawGeneration> = lattice
                .generations()
                .iter()
                .map(|g| {
                    by_id
                        .get(g.id.as_str())
                        .copied()
                        .filter(|raw| raw.text == g.text())
                        .ok_or_else(|| {
                            SessionError::InvalidArgument(format!("cached lattice names unknown generation `{}`", g.id))
                        })
                })
                .collect::<Result<_, _>>()?;
            let scope = LatticeEngine::scope_key(record.mode, &gens);
            let lattice = Arc::new(lattice);
            for export in &record.layouts {
                let layout = LayoutResult::from_export(export, &lattice)
                    .ok_or_else(|| SessionError::InvalidArgument("cached layout does not match its lattice".into()))?;
                let key = LatticeEngine::layout_cache_key(&scope, record.threshold, &export.params, &palette);
                session.engine().insert_layout(
                    key,
                    CachedLayout {
                        scope: scope.clone(),
                        threshold: record.threshold,
                        params: export.params.clone(),
                        layout: Arc::new(layout),
                    },
                );
            }
            session.engine().insert_lattice(CachedLattice {
                scope,
                prompt_ids: record.prompt_ids,
                threshold: record.threshold,
                lattice,
            });
        }
        Ok(session)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SessionError> {
        let path = path.as_ref();
        let body = serde_json::to_vec_pretty(&self.to_bundle())?;
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&body)?;
        tmp.persist(path).map_err(|e| SessionError::Io(e.error))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>, engine: Arc<LatticeEngine>) -> Result<Self, SessionError> {
        let bundle: SessionBundle = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_bundle(bundle, engine)
    }
}
