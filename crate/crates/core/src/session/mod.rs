//! Interactive exploration state: prompts, generations, sliders, node
//! selection and comparison mode.
//!
//! Every mutation commits a new immutable [`Snapshot`]; readers hold an
//! `Arc<Snapshot>` and never block the writer. Lattices and layouts are
//! derived on demand through a shared [`LatticeEngine`] and memoized there.

mod engine;
mod graph;
mod persist;

pub use engine::{CachedLattice, CachedLayout, LatticeEngine};
pub use graph::{
    generation_items, graph_view, Emphasis, GenerationItem, GraphPanel, GraphQuery, GraphView, ResolvedQuery,
};
pub use persist::{CacheRecord, SessionBundle, SESSION_BUNDLE_VERSION};

use crate::embedding::EmbeddingError;
use crate::generation::RawGeneration;
use crate::lattice::{NodeId, TokenLattice, DEFAULT_MERGE_THRESHOLD};
use crate::layout::{palette_color, LayoutError, LinearRgb};
use crate::segment::SegmentationMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub prompt_id: String,
    pub prompt_text: String,
    #[serde(default)]
    pub model_id: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_n")]
    pub n_generations: usize,
    /// sRGB hex; assigned from the palette when absent.
    #[serde(default)]
    pub palette_color: Option<String>,
}

fn default_temperature() -> f64 {
    0.7
}

fn default_n() -> usize {
    20
}

impl PromptConfig {
    pub fn new(prompt_id: impl Into<String>, prompt_text: impl Into<String>) -> Self {
        Self {
            prompt_id: prompt_id.into(),
            prompt_text: prompt_text.into(),
            model_id: String::new(),
            temperature: default_temperature(),
            n_generations: default_n(),
            palette_color: None,
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        if self.prompt_id.is_empty() {
            return Err(SessionError::InvalidArgument("prompt_id must not be empty".into()));
        }
        if self.n_generations == 0 {
            return Err(SessionError::InvalidArgument("n_generations must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(SessionError::InvalidArgument(
                "temperature must be a non-negative number".into(),
            ));
        }
        if let Some(c) = &self.palette_color {
            if LinearRgb::from_hex(c).is_none() {
                return Err(SessionError::InvalidArgument(format!("bad palette color `{c}`")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonLayout {
    #[default]
    Merged,
    SideBySide,
}

impl fmt::Display for ComparisonLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Merged => "merged",
            Self::SideBySide => "side_by_side",
        })
    }
}

impl FromStr for ComparisonLayout {
    type Err = SessionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "merged" => Ok(Self::Merged),
            "side_by_side" | "side-by-side" => Ok(Self::SideBySide),
            other => Err(SessionError::InvalidArgument(format!(
                "unknown comparison layout `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewState {
    pub selected_node_ids: BTreeSet<NodeId>,
    pub longtail_t: f64,
    pub merge_threshold: f64,
    pub lambda: f64,
    pub mode: SegmentationMode,
    pub comparison_layout: ComparisonLayout,
    pub seed: u64,
}

impl Default for ViewState {
    fn default() -> Self {
        Self {
            selected_node_ids: BTreeSet::new(),
            longtail_t: 0.0,
            merge_threshold: DEFAULT_MERGE_THRESHOLD,
            lambda: 0.5,
            mode: SegmentationMode::Space,
            comparison_layout: ComparisonLayout::Merged,
            seed: 42,
        }
    }
}

/// Generations split by whether their traversal visits every selected node.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub emphasized_generation_ids: BTreeSet<String>,
    pub deemphasized_generation_ids: BTreeSet<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("session file: {0}")]
    Io(#[from] std::io::Error),
    #[error("session file: {0}")]
    Json(#[from] serde_json::Error),
}

/// One immutable state of a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub id: u64,
    pub prompts: Vec<PromptConfig>,
    pub generations: Vec<RawGeneration>,
    pub view: ViewState,
}

impl Snapshot {
    /// Content digest, independent of the snapshot id.
    pub fn digest(&self) -> String {
        let body = serde_json::to_vec(&(&self.prompts, &self.generations, &self.view)).expect("snapshot serializes");
        hex::encode(Sha256::digest(body))
    }

    pub fn prompt(&self, prompt_id: &str) -> Option<&PromptConfig> {
        self.prompts.iter().find(|p| p.prompt_id == prompt_id)
    }

    /// Generations grouped by prompt, prompts in insertion order.
    pub fn generations_by_prompt(&self) -> Vec<(String, Vec<&RawGeneration>)> {
        self.prompts
            .iter()
            .map(|p| {
                let gens = self.generations.iter().filter(|g| g.prompt_id == p.prompt_id).collect();
                (p.prompt_id.clone(), gens)
            })
            .filter(|(_, g): &(String, Vec<&RawGeneration>)| !g.is_empty())
            .collect()
    }

    pub fn palette(&self) -> BTreeMap<String, LinearRgb> {
        self.prompts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let color = p
                    .palette_color
                    .as_deref()
                    .and_then(LinearRgb::from_hex)
                    .unwrap_or_else(|| palette_color(i));
                (p.prompt_id.clone(), color)
            })
            .collect()
    }
}

/// The lattices behind one view.
#[derive(Clone, Debug)]
pub enum Comparison {
    /// One lattice over every prompt's generations.
    Merged(CachedLattice),
    /// One lattice per prompt, in prompt order.
    SideBySide(Vec<CachedLattice>),
}

impl Comparison {
    pub fn panels(&self) -> &[CachedLattice] {
        match self {
            Self::Merged(l) => std::slice::from_ref(l),
            Self::SideBySide(ls) => ls,
        }
    }

    pub fn find_node(&self, id: &NodeId) -> Option<(&TokenLattice, usize)> {
        self.panels()
            .iter()
            .find_map(|p| p.lattice.node_index(id).map(|i| (&*p.lattice, i)))
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.find_node(id).is_some()
    }

    /// Conjunctive filter: a generation is emphasized iff it visits every
    /// selected node.
    pub fn filter(&self, selection: &BTreeSet<NodeId>) -> Result<FilterResult, NodeId> {
        if let Some(missing) = selection.iter().find(|id| !self.contains(id)) {
            return Err(missing.clone());
        }
        let mut out = FilterResult::default();
        for panel in self.panels() {
            let l = &panel.lattice;
            for (g, t) in l.traversals().iter().enumerate() {
                let visits = selection
                    .iter()
                    .all(|id| l.node_index(id).is_some_and(|n| t.steps.iter().any(|s| s.node == n)));
                let id = l.generations()[g].id.clone();
                if visits {
                    out.emphasized_generation_ids.insert(id);
                } else {
                    out.deemphasized_generation_ids.insert(id);
                }
            }
        }
        Ok(out)
    }
}

/// Maps each selected node of `old` onto the node of `new` sharing the most
/// tokens with it; nodes with no overlap are dropped.
pub fn remap_selection(selection: &BTreeSet<NodeId>, old: &Comparison, new: &Comparison) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for id in selection {
        let Some((lattice, index)) = old.find_node(id) else {
            continue;
        };
        let mut ranges: HashMap<&str, (usize, usize)> = HashMap::new();
        for m in &lattice.node(index).members {
            ranges.insert(m.generation.as_str(), (m.start, m.end));
        }
        let mut best: Option<(usize, &NodeId)> = None;
        for panel in new.panels() {
            for node in panel.lattice.nodes() {
                let overlap: usize = node
                    .members
                    .iter()
                    .filter_map(|m| {
                        let &(s, e) = ranges.get(m.generation.as_str())?;
                        Some(e.min(m.end).saturating_sub(s.max(m.start)))
                    })
                    .sum();
                if overlap > 0 && best.is_none_or(|(b, _)| overlap > b) {
                    best = Some((overlap, &node.id));
                }
            }
        }
        if let Some((_, id)) = best {
            out.insert(id.clone());
        }
    }
    out
}

/// A session: a history of snapshots plus the engine deriving views.
#[derive(Debug)]
pub struct Session {
    history: Vec<Arc<Snapshot>>,
    next_id: u64,
    engine: Arc<LatticeEngine>,
}

impl Default for Session {
    fn default() -> Self {
        Self::new(Arc::new(LatticeEngine::default()))
    }
}

impl Session {
    pub fn new(engine: Arc<LatticeEngine>) -> Self {
        let first = Snapshot {
            id: 0,
            prompts: Vec::new(),
            generations: Vec::new(),
            view: ViewState::default(),
        };
        Self {
            history: vec![Arc::new(first)],
            next_id: 1,
            engine,
        }
    }

    pub fn engine(&self) -> &Arc<LatticeEngine> {
        &self.engine
    }

    pub fn current(&self) -> Arc<Snapshot> {
        Arc::clone(self.history.last().expect("history is never empty"))
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    fn commit(&mut self, mut next: Snapshot) -> Arc<Snapshot> {
        next.id = self.next_id;
        self.next_id += 1;
        let snap = Arc::new(next);
        self.history.push(Arc::clone(&snap));
        snap
    }

    fn edit(&self) -> Snapshot {
        (*self.current()).clone()
    }

    /// Reverts to the previous snapshot.
    pub fn undo(&mut self) -> Result<Arc<Snapshot>, SessionError> {
        if self.history.len() <= 1 {
            return Err(SessionError::NothingToUndo);
        }
        self.history.pop();
        Ok(self.current())
    }

    pub fn add_prompt(&mut self, mut config: PromptConfig) -> Result<Arc<Snapshot>, SessionError> {
        config.validate()?;
        let mut next = self.edit();
        if next.prompt(&config.prompt_id).is_some() {
            return Err(SessionError::Conflict(format!(
                "prompt `{}` already exists",
                config.prompt_id
            )));
        }
        if config.palette_color.is_none() {
            config.palette_color = Some(palette_color(next.prompts.len()).to_hex());
        }
        next.prompts.push(config);
        Ok(self.commit(next))
    }

    /// Appends generations to a registered prompt. Their `prompt_id` is set
    /// to `prompt_id`.
    pub fn add_generations(
        &mut self,
        prompt_id: &str,
        generations: Vec<RawGeneration>,
    ) -> Result<Arc<Snapshot>, SessionError> {
        let mut next = self.edit();
        if next.prompt(prompt_id).is_none() {
            return Err(SessionError::NotFound(format!("prompt `{prompt_id}`")));
        }
        let mut ids: BTreeSet<&str> = next.generations.iter().map(|g| g.id.as_str()).collect();
        for g in &generations {
            if !ids.insert(&g.id) {
                return Err(SessionError::Conflict(format!("generation `{}` already exists", g.id)));
            }
        }
        let old = if next.view.selected_node_ids.is_empty() {
            None
        } else {
            Some(self.comparison_for(&next, &next.view)?)
        };
        next.generations.extend(generations.into_iter().map(|mut g| {
            g.prompt_id = prompt_id.to_string();
            g
        }));
        if let Some(old) = old {
            let new = self.comparison_for(&next, &next.view)?;
            next.view.selected_node_ids = remap_selection(&next.view.selected_node_ids, &old, &new);
        }
        Ok(self.commit(next))
    }

    /// Lattices for the current view.
    pub fn assemble_comparison(&self) -> Result<Comparison, SessionError> {
        let snap = self.current();
        self.comparison_for(&snap, &snap.view)
    }

    fn comparison_for(&self, snap: &Snapshot, view: &ViewState) -> Result<Comparison, SessionError> {
        comparison(
            &self.engine,
            snap,
            view.mode,
            view.merge_threshold,
            view.comparison_layout,
        )
    }

    pub fn select_nodes<I>(&mut self, node_ids: I) -> Result<FilterResult, SessionError>
    where
        I: IntoIterator,
        I::Item: Into<NodeId>,
    {
        let selection: BTreeSet<NodeId> = node_ids.into_iter().map(Into::into).collect();
        let result = self
            .assemble_comparison()?
            .filter(&selection)
            .map_err(|id| SessionError::NotFound(format!("node `{id}`")))?;
        if selection != self.current().view.selected_node_ids {
            let mut next = self.edit();
            next.view.selected_node_ids = selection;
            self.commit(next);
        }
        Ok(result)
    }

    pub fn clear_selection(&mut self) -> Result<FilterResult, SessionError> {
        self.select_nodes(std::iter::empty::<NodeId>())
    }

    /// Filter for the current selection.
    pub fn filter(&self) -> Result<FilterResult, SessionError> {
        let snap = self.current();
        self.assemble_comparison()?
            .filter(&snap.view.selected_node_ids)
            .map_err(|id| SessionError::NotFound(format!("node `{id}`")))
    }

    /// Rebuilds at a new merge threshold; selected nodes follow the tokens
    /// they covered.
    pub fn set_merge_threshold(&mut self, threshold: f64) -> Result<Arc<Snapshot>, SessionError> {
        check_threshold(threshold)?;
        let snap = self.current();
        if snap.view.merge_threshold.to_bits() == threshold.to_bits() {
            return Ok(snap);
        }
        let mut view = snap.view.clone();
        view.merge_threshold = threshold;
        self.relayout(view)
    }

    pub fn set_comparison_layout(&mut self, layout: ComparisonLayout) -> Result<Arc<Snapshot>, SessionError> {
        let snap = self.current();
        if snap.view.comparison_layout == layout {
            return Ok(snap);
        }
        let mut view = snap.view.clone();
        view.comparison_layout = layout;
        self.relayout(view)
    }

    /// Changes segmentation. Token boundaries move, so the selection is
    /// cleared.
    pub fn set_mode(&mut self, mode: SegmentationMode) -> Result<Arc<Snapshot>, SessionError> {
        let snap = self.current();
        if snap.view.mode == mode {
            return Ok(snap);
        }
        let mut next = self.edit();
        next.view.mode = mode;
        next.view.selected_node_ids.clear();
        Ok(self.commit(next))
    }

    pub fn set_lambda(&mut self, lambda: f64) -> Result<Arc<Snapshot>, SessionError> {
        check_unit("lambda", lambda)?;
        self.set_view(|v| v.lambda = lambda)
    }

    pub fn set_longtail(&mut self, t: f64) -> Result<Arc<Snapshot>, SessionError> {
        check_unit("longtail", t)?;
        self.set_view(|v| v.longtail_t = t)
    }

    pub fn set_seed(&mut self, seed: u64) -> Result<Arc<Snapshot>, SessionError> {
        self.set_view(|v| v.seed = seed)
    }

    fn set_view(&mut self, f: impl FnOnce(&mut ViewState)) -> Result<Arc<Snapshot>, SessionError> {
        let mut next = self.edit();
        f(&mut next.view);
        if next.view == self.current().view {
            return Ok(self.current());
        }
        Ok(self.commit(next))
    }

    fn relayout(&mut self, view: ViewState) -> Result<Arc<Snapshot>, SessionError> {
        let snap = self.current();
        let mut next = self.edit();
        if !snap.view.selected_node_ids.is_empty() {
            let old = self.comparison_for(&snap, &snap.view)?;
            let new = self.comparison_for(&snap, &view)?;
            next.view.selected_node_ids = remap_selection(&snap.view.selected_node_ids, &old, &new);
        }
        next.view.merge_threshold = view.merge_threshold;
        next.view.comparison_layout = view.comparison_layout;
        Ok(self.commit(next))
    }

    /// Node path of one generation, for list-to-graph highlighting.
    pub fn crosslink(&self, generation_id: &str) -> Result<Vec<NodeId>, SessionError> {
        for panel in self.assemble_comparison()?.panels() {
            if let Some(g) = panel.lattice.generation_index(generation_id) {
                return Ok(panel.lattice.path_of(g).into_iter().cloned().collect());
            }
        }
        Err(SessionError::NotFound(format!("generation `{generation_id}`")))
    }
}

pub(crate) fn comparison(
    engine: &LatticeEngine,
    snap: &Snapshot,
    mode: SegmentationMode,
    threshold: f64,
    layout: ComparisonLayout,
) -> Result<Comparison, SessionError> {
    match layout {
        ComparisonLayout::Merged => {
            let ordered: Vec<&RawGeneration> = snap.generations_by_prompt().into_iter().flat_map(|(_, g)| g).collect();
            Ok(Comparison::Merged(engine.lattice(mode, &ordered, threshold)?))
        }
        ComparisonLayout::SideBySide => snap
            .generations_by_prompt()
            .into_iter()
            .map(|(_, gens)| engine.lattice(mode, &gens, threshold).map_err(SessionError::from))
            .collect::<Result<_, _>>()
            .map(Comparison::SideBySide),
    }
}

pub(crate) fn check_threshold(t: f64) -> Result<(), SessionError> {
    if t.is_finite() && (-1.0..=2.0).contains(&t) {
        Ok(())
    } else {
        Err(SessionError::InvalidArgument(format!("threshold {t} outside [-1, 2]")))
    }
}

pub(crate) fn check_unit(what: &str, v: f64) -> Result<(), SessionError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SessionError::InvalidArgument(format!("{what} {v} outside [0, 1]")))
    }
}
