use super::{collapse_chains, merge_similar, GenerationTokens, TokenLattice};
use crate::embedding::{EmbeddingError, EmbeddingProvider, DEFAULT_CONTEXT_WINDOW};
use crate::segment::SegmentationMode;
use crate::similarity::{PreparedTokens, ScoreTable, DEFAULT_SCORE_FLOOR};
use crate::stopwords::StopwordList;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex};

pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LatticeConfig {
    pub mode: SegmentationMode,
    /// Neighbor tokens per side mixed into each token's embedding.
    pub context_window: usize,
    /// Lowest score kept in the precomputed candidate table. Thresholds
    /// below it trigger a recompute.
    pub score_floor: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            mode: SegmentationMode::Space,
            context_window: DEFAULT_CONTEXT_WINDOW,
            score_floor: DEFAULT_SCORE_FLOOR,
        }
    }
}

/// Builds lattices for one corpus at any merge threshold.
///
/// Embeddings are fetched once in [`LatticeBuilder::new`]; later builds only
/// replay the sorted candidate table, so moving the threshold slider is cheap.
pub struct LatticeBuilder {
    config: LatticeConfig,
    chains: TokenLattice,
    prepared: PreparedTokens,
    table: Mutex<Arc<ScoreTable>>,
}

impl LatticeBuilder {
    pub fn new<P: EmbeddingProvider + ?Sized>(
        generations: Vec<GenerationTokens>,
        provider: &P,
        stopwords: &StopwordList,
        config: LatticeConfig,
    ) -> Result<Self, EmbeddingError> {
        let seqs: Vec<_> = generations.iter().map(|g| g.sequence.clone()).collect();
        let prepared = PreparedTokens::prepare(&seqs, provider, stopwords, config.context_window)?;
        let table = ScoreTable::compute(&prepared, config.score_floor);
        Ok(Self {
            chains: TokenLattice::build_chains(config.mode, generations),
            config,
            prepared,
            table: Mutex::new(Arc::new(table)),
        })
    }

    /// Segments `(id, prompt_id, text)` triples with the configured mode.
    pub fn from_texts<P: EmbeddingProvider + ?Sized>(
        texts: &[(String, String, String)],
        provider: &P,
        stopwords: &StopwordList,
        config: LatticeConfig,
    ) -> Result<Self, EmbeddingError> {
        let gens = texts
            .iter()
            .map(|(id, prompt, text)| GenerationTokens::new(id.clone(), prompt.clone(), text, config.mode))
            .collect();
        Self::new(gens, provider, stopwords, config)
    }

    pub fn config(&self) -> &LatticeConfig {
        &self.config
    }

    pub fn generations(&self) -> &[GenerationTokens] {
        self.chains.generations()
    }

    pub fn prepared(&self) -> &PreparedTokens {
        &self.prepared
    }

    /// One chain per generation, with unbranched runs collapsed.
    pub fn unmerged(&self) -> TokenLattice {
        collapse_chains(&self.chains)
    }

    /// Merged token lattice before chain collapse.
    pub fn merged_tokens(&self, threshold: f64) -> TokenLattice {
        merge_similar(&self.chains, threshold, &self.table_for(threshold))
    }

    pub fn build(&self, threshold: f64) -> TokenLattice {
        collapse_chains(&self.merged_tokens(threshold))
    }

    fn table_for(&self, threshold: f64) -> Arc<ScoreTable> {
        let mut guard = self.table.lock().unwrap_or_else(|e| e.into_inner());
        if threshold < guard.floor() {
            log::debug!("threshold {threshold} below score floor {}; rescoring", guard.floor());
            *guard = Arc::new(ScoreTable::compute(&self.prepared, threshold));
        }
        Arc::clone(&guard)
    }
}
