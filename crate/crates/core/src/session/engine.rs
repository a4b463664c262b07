use crate::embedding::{EmbeddingError, EmbeddingProvider, FallbackEmbedder, DEFAULT_CONTEXT_WINDOW};
use crate::generation::RawGeneration;
use crate::lattice::{GenerationTokens, LatticeBuilder, LatticeConfig, TokenLattice};
use crate::layout::{compute_layout_with, LayoutError, LayoutInputs, LayoutParams, LayoutResult, LinearRgb};
use crate::segment::SegmentationMode;
use crate::similarity::DEFAULT_SCORE_FLOOR;
use crate::stopwords::StopwordList;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

const CACHE_LIMIT: usize = 64;

/// A lattice held in the engine cache, with what it was built from.
#[derive(Clone, Debug)]
pub struct CachedLattice {
    pub scope: String,
    pub prompt_ids: Vec<String>,
    pub threshold: f64,
    pub lattice: Arc<TokenLattice>,
}

#[derive(Clone, Debug)]
pub struct CachedLayout {
    pub scope: String,
    pub threshold: f64,
    pub params: LayoutParams,
    pub layout: Arc<LayoutResult>,
}

/// Embedder, stopwords and memoized builders, lattices and layouts.
///
/// Cheap to share behind an `Arc`; every method takes `&self`.
pub struct LatticeEngine {
    embedder: Arc<dyn EmbeddingProvider>,
    stopwords: StopwordList,
    context_window: usize,
    score_floor: f64,
    builders: Mutex<HashMap<String, Arc<LatticeBuilder>>>,
    lattices: Mutex<BTreeMap<(String, u64), CachedLattice>>,
    layouts: Mutex<BTreeMap<(String, u64, String), CachedLayout>>,
}

impl Default for LatticeEngine {
    fn default() -> Self {
        Self::new(Arc::new(FallbackEmbedder::default()))
    }
}

impl std::fmt::Debug for LatticeEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LatticeEngine")
            .field("embedder", &self.embedder.name())
            .field("context_window", &self.context_window)
            .finish_non_exhaustive()
    }
}

impl LatticeEngine {
    pub fn new(embedder: Arc<dyn EmbeddingProvider>) -> Self {
        Self {
            embedder,
            stopwords: StopwordList::english().clone(),
            context_window: DEFAULT_CONTEXT_WINDOW,
            score_floor: DEFAULT_SCORE_FLOOR,
            builders: Mutex::default(),
            lattices: Mutex::default(),
            layouts: Mutex::default(),
        }
    }

    pub fn with_stopwords(mut self, stopwords: StopwordList) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn with_context_window(mut self, window: usize) -> Self {
        self.context_window = window;
        self
    }

    pub fn embedder_name(&self) -> &str {
        self.embedder.name()
    }

    /// Digest identifying a set of generations under one segmentation mode.
    pub fn scope_key(mode: SegmentationMode, generations: &[&RawGeneration]) -> String {
        let mut h = Sha256::new();
        h.update(mode.as_str());
        for g in generations {
            for part in [&g.id, &g.prompt_id, &g.text] {
                h.update((part.len() as u64).to_le_bytes());
                h.update(part.as_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn builder(
        &self,
        mode: SegmentationMode,
        scope: &str,
        gens: &[&RawGeneration],
    ) -> Result<Arc<LatticeBuilder>, EmbeddingError> {
        if let Some(b) = lock(&self.builders).get(scope) {
            return Ok(Arc::clone(b));
        }
        let tokens = gens.iter().map(|g| GenerationTokens::from_raw(g, mode)).collect();
        let config = LatticeConfig {
            mode,
            context_window: self.context_window,
            score_floor: self.score_floor,
        };
        let built = Arc::new(LatticeBuilder::new(tokens, &self.embedder, &self.stopwords, config)?);
        let mut builders = lock(&self.builders);
        if builders.len() >= CACHE_LIMIT {
            builders.clear();
        }
        Ok(Arc::clone(builders.entry(scope.to_string()).or_insert(built)))
    }

    /// Merged and collapsed lattice over `gens`.
    pub fn lattice(
        &self,
        mode: SegmentationMode,
        gens: &[&RawGeneration],
        threshold: f64,
    ) -> Result<CachedLattice, EmbeddingError> {
        let scope = Self::scope_key(mode, gens);
        let key = (scope.clone(), threshold.to_bits());
        if let Some(hit) = lock(&self.lattices).get(&key) {
            return Ok(hit.clone());
        }
        let lattice = Arc::new(self.builder(mode, &scope, gens)?.build(threshold));
        let mut prompt_ids: Vec<String> = Vec::new();
        for g in gens {
            if !prompt_ids.contains(&g.prompt_id) {
                prompt_ids.push(g.prompt_id.clone());
            }
        }
        let entry = CachedLattice {
            scope,
            prompt_ids,
            threshold,
            lattice,
        };
        self.insert_lattice(entry.clone());
        Ok(entry)
    }

    pub(crate) fn insert_lattice(&self, entry: CachedLattice) {
        let mut cache = lock(&self.lattices);
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert((entry.scope.clone(), entry.threshold.to_bits()), entry);
    }

    pub fn layout(
        &self,
        lattice: &CachedLattice,
        params: &LayoutParams,
        palette: &BTreeMap<String, LinearRgb>,
        radii: &BTreeMap<crate::lattice::NodeId, (f64, f64)>,
    ) -> Result<Arc<LayoutResult>, LayoutError> {
        let cacheable = radii.is_empty();
        let key = (
            lattice.scope.clone(),
            lattice.threshold.to_bits(),
            layout_key(params, palette),
        );
        if cacheable {
            if let Some(hit) = lock(&self.layouts).get(&key) {
                return Ok(Arc::clone(&hit.layout));
            }
        }
        let inputs = LayoutInputs {
            palette: Some(palette.clone()),
            radii: radii.clone(),
        };
        let layout = Arc::new(compute_layout_with(&lattice.lattice, params, &inputs)?);
        if cacheable {
            self.insert_layout(
                key,
                CachedLayout {
                    scope: lattice.scope.clone(),
                    threshold: lattice.threshold,
                    params: params.clone(),
                    layout: Arc::clone(&layout),
                },
            );
        }
        Ok(layout)
    }

    pub(crate) fn insert_layout(&self, key: (String, u64, String), entry: CachedLayout) {
        let mut cache = lock(&self.layouts);
        if cache.len() >= CACHE_LIMIT {
            cache.clear();
        }
        cache.insert(key, entry);
    }

    pub(crate) fn layout_cache_key(
        scope: &str,
        threshold: f64,
        params: &LayoutParams,
        palette: &BTreeMap<String, LinearRgb>,
    ) -> (String, u64, String) {
        (scope.to_string(), threshold.to_bits(), layout_key(params, palette))
    }

    pub fn cached_lattices(&self) -> Vec<CachedLattice> {
        lock(&self.lattices).values().cloned().collect()
    }

    pub fn cached_layouts(&self) -> Vec<CachedLayout> {
        lock(&self.layouts).values().cloned().collect()
    }
}

fn layout_key(params: &LayoutParams, palette: &BTreeMap<String, LinearRgb>) -> String {
    serde_json::to_string(&(params, palette)).expect("layout key serializes")
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}
