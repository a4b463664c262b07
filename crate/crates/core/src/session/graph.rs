use super::{
    check_threshold, check_unit, comparison, remap_selection, ComparisonLayout, FilterResult, LatticeEngine, Session,
    SessionError, Snapshot,
};
use crate::lattice::{LatticeExport, LatticeStats, NodeId};
use crate::layout::{LayoutExport, LayoutParams};
use crate::segment::SegmentationMode;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

/// View parameters for one graph request; unset fields come from the
/// session's view state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphQuery {
    pub mode: Option<SegmentationMode>,
    pub threshold: Option<f64>,
    pub lambda: Option<f64>,
    pub longtail: Option<f64>,
    pub seed: Option<u64>,
    pub comparison: Option<ComparisonLayout>,
    pub selection: Option<Vec<NodeId>>,
    /// Label metrics measured by the client.
    pub char_width: Option<f64>,
    pub font_size: Option<f64>,
    /// Explicit `(rx, ry)` per node, overriding label metrics.
    #[serde(default)]
    pub radii: BTreeMap<NodeId, (f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedQuery {
    pub mode: SegmentationMode,
    pub threshold: f64,
    pub lambda: f64,
    pub longtail: f64,
    pub seed: u64,
    pub comparison: ComparisonLayout,
    pub selection: Vec<NodeId>,
    pub char_width: f64,
    pub font_size: f64,
}

/// Focus+context flags: deemphasized items stay in the export.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emphasis {
    /// Parallel to `lattice.nodes`.
    pub nodes: Vec<bool>,
    /// Parallel to `lattice.traversals`.
    pub paths: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPanel {
    pub prompt_ids: Vec<String>,
    pub lattice: LatticeExport,
    pub layout: LayoutExport,
    pub stats: LatticeStats,
    pub emphasis: Emphasis,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphView {
    pub snapshot_id: u64,
    pub snapshot_digest: String,
    pub query: ResolvedQuery,
    pub filter: FilterResult,
    pub panels: Vec<GraphPanel>,
}

impl GraphView {
    /// Strong validator: digest of the snapshot content and the resolved
    /// query, which together determine the body.
    pub fn etag(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.snapshot_digest.as_bytes());
        h.update(serde_json::to_vec(&self.query).expect("query serializes"));
        format!("\"{}\"", hex::encode(&h.finalize()[..16]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph view serializes")
    }
}

/// One entry of the raw-output list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationItem {
    pub id: String,
    pub prompt_id: String,
    pub text: String,
    pub emphasized: bool,
}

/// Builds the graph for `query` against an immutable snapshot.
pub fn graph_view(engine: &LatticeEngine, snap: &Snapshot, query: &GraphQuery) -> Result<GraphView, SessionError> {
    if snap.generations.is_empty() {
        return Err(SessionError::NotFound("session has no generations".into()));
    }
    let view = &snap.view;
    let mode = query.mode.unwrap_or(view.mode);
    let threshold = query.threshold.unwrap_or(view.merge_threshold);
    let lambda = query.lambda.unwrap_or(view.lambda);
    let longtail = query.longtail.unwrap_or(view.longtail_t);
    let layout_mode = query.comparison.unwrap_or(view.comparison_layout);
    let defaults = LayoutParams::default();
    let char_width = query.char_width.unwrap_or(defaults.char_width);
    let font_size = query.font_size.unwrap_or(defaults.font_size);
    check_threshold(threshold)?;
    check_unit("lambda", lambda)?;
    check_unit("longtail", longtail)?;
    for (what, v) in [("char_width", char_width), ("font_size", font_size)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(SessionError::InvalidArgument(format!("{what} must be positive")));
        }
    }
    if query
        .radii
        .values()
        .any(|&(rx, ry)| !(rx > 0.0 && ry > 0.0 && rx.is_finite() && ry.is_finite()))
    {
        return Err(SessionError::InvalidArgument("radii must be positive".into()));
    }

    let cmp = comparison(engine, snap, mode, threshold, layout_mode)?;
    let selection: BTreeSet<NodeId> = match &query.selection {
        Some(ids) => {
            let ids: BTreeSet<NodeId> = ids.iter().cloned().collect();
            if let Some(bad) = ids.iter().find(|id| !cmp.contains(id)) {
                return Err(SessionError::InvalidArgument(format!("unknown node `{bad}`")));
            }
            ids
        }
        None if view.selected_node_ids.is_empty() || mode != view.mode => BTreeSet::new(),
        None if threshold.to_bits() == view.merge_threshold.to_bits() && layout_mode == view.comparison_layout => {
            view.selected_node_ids.clone()
        }
        None => {
            let old = comparison(engine, snap, view.mode, view.merge_threshold, view.comparison_layout)?;
            remap_selection(&view.selected_node_ids, &old, &cmp)
        }
    };
    let filter = cmp
        .filter(&selection)
        .map_err(|id| SessionError::InvalidArgument(format!("unknown node `{id}`")))?;

    let params = LayoutParams {
        lambda,
        longtail,
        seed: query.seed.unwrap_or(view.seed),
        char_width,
        font_size,
        ..defaults
    };
    let palette = snap.palette();
    let mut panels = Vec::with_capacity(cmp.panels().len());
    for panel in cmp.panels() {
        let l = &panel.lattice;
        let radii = query
            .radii
            .iter()
            .filter(|(id, _)| l.node_index(id).is_some())
            .map(|(id, r)| (id.clone(), *r))
            .collect();
        let layout = engine.layout(panel, &params, &palette, &radii)?;
        let paths: Vec<bool> = l
            .generations()
            .iter()
            .map(|g| filter.emphasized_generation_ids.contains(&g.id))
            .collect();
        let mut nodes = vec![false; l.nodes().len()];
        for (t, &emph) in l.traversals().iter().zip(&paths) {
            if emph {
                for s in &t.steps {
                    nodes[s.node] = true;
                }
            }
        }
        panels.push(GraphPanel {
            prompt_ids: panel.prompt_ids.clone(),
            lattice: l.to_export(),
            layout: LayoutExport::new(&layout, &params),
            stats: l.stats(),
            emphasis: Emphasis { nodes, paths },
        });
    }

    Ok(GraphView {
        snapshot_id: snap.id,
        snapshot_digest: snap.digest(),
        query: ResolvedQuery {
            mode,
            threshold,
            lambda,
            longtail,
            seed: params.seed,
            comparison: layout_mode,
            selection: selection.into_iter().collect(),
            char_width,
            font_size,
        },
        filter,
        panels,
    })
}

/// Raw outputs flagged by the filter for `selection` (the view's selection
/// when `None`), in prompt then sampling order.
pub fn generation_items(
    engine: &LatticeEngine,
    snap: &Snapshot,
    selection: Option<&[NodeId]>,
) -> Result<Vec<GenerationItem>, SessionError> {
    let selection: BTreeSet<NodeId> = match selection {
        Some(ids) => ids.iter().cloned().collect(),
        None => snap.view.selected_node_ids.clone(),
    };
    let filter = if selection.is_empty() || snap.generations.is_empty() {
        None
    } else {
        let view = &snap.view;
        let cmp = comparison(engine, snap, view.mode, view.merge_threshold, view.comparison_layout)?;
        Some(
            cmp.filter(&selection)
                .map_err(|id| SessionError::InvalidArgument(format!("unknown node `{id}`")))?,
        )
    };
    Ok(snap
        .generations_by_prompt()
        .into_iter()
        .flat_map(|(_, gens)| gens)
        .map(|g| GenerationItem {
            id: g.id.clone(),
            prompt_id: g.prompt_id.clone(),
            text: g.text.clone(),
            emphasized: filter
                .as_ref()
                .is_none_or(|f| f.emphasized_generation_ids.contains(&g.id)),
        })
        .collect())
}

impl Session {
    pub fn graph(&self, query: &GraphQuery) -> Result<GraphView, SessionError> {
        graph_view(self.engine(), &self.current(), query)
    }

    pub fn generation_items(&self, selection: Option<&[NodeId]>) -> Result<Vec<GenerationItem>, SessionError> {
        generation_items(self.engine(), &self.current(), selection)
    }
}
