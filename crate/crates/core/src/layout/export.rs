use super::{GenerationPath, LayoutNode, LayoutParams, LayoutResult, LinearRgb};
use crate::lattice::TokenLattice;
use serde::{Deserialize, Serialize};

pub const LAYOUT_EXPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutNodeExport {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub rx: f64,
    pub ry: f64,
    pub opacity: f64,
    /// sRGB hex for direct use in styles.
    pub color: String,
    pub color_linear: [f64; 3],
    pub size_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathExport {
    pub gen: String,
    pub prompt_id: String,
    pub color: String,
    pub color_linear: [f64; 3],
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutExport {
    pub version: u32,
    pub params: LayoutParams,
    pub nodes: Vec<LayoutNodeExport>,
    pub paths: Vec<PathExport>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl LayoutExport {
    pub fn new(result: &LayoutResult, params: &LayoutParams) -> Self {
        Self {
            version: LAYOUT_EXPORT_VERSION,
            params: params.clone(),
            nodes: result
                .nodes
                .iter()
                .map(|n| LayoutNodeExport {
                    id: n.node_id.to_string(),
                    x: n.x,
                    y: n.y,
                    rx: n.rx,
                    ry: n.ry,
                    opacity: n.opacity,
                    color: n.color.to_hex(),
                    color_linear: n.color.0,
                    size_scale: n.size_scale,
                })
                .collect(),
            paths: result
                .paths
                .iter()
                .map(|p| PathExport {
                    gen: p.generation.clone(),
                    prompt_id: p.prompt_id.clone(),
                    color: p.color.to_hex(),
                    color_linear: p.color.0,
                    points: p.points.clone(),
                })
                .collect(),
            iterations_used: result.iterations_used,
            converged: result.converged,
        }
    }
}

impl LayoutResult {
    /// Rebuilds a layout from its export; `lattice` supplies labels and
    /// frequencies. Returns `None` when the two do not line up.
    pub fn from_export(export: &LayoutExport, lattice: &TokenLattice) -> Option<Self> {
        if export.version != LAYOUT_EXPORT_VERSION
            || export.nodes.len() != lattice.nodes().len()
            || export.paths.len() != lattice.traversals().len()
        {
            return None;
        }
        let mut nodes = Vec::with_capacity(export.nodes.len());
        for (e, n) in export.nodes.iter().zip(lattice.nodes()) {
            if e.id != n.id.as_str() {
                return None;
            }
            nodes.push(LayoutNode {
                node_id: n.id.clone(),
                label: n.label.clone(),
                frequency: n.frequency,
                x: e.x,
                y: e.y,
                rx: e.rx,
                ry: e.ry,
                size_scale: e.size_scale,
                opacity: e.opacity,
                color: LinearRgb(e.color_linear),
            });
        }
        let mut paths = Vec::with_capacity(export.paths.len());
        for (p, g) in export.paths.iter().zip(lattice.generations()) {
            if p.gen != g.id {
                return None;
            }
            paths.push(GenerationPath {
                generation: p.gen.clone(),
                prompt_id: p.prompt_id.clone(),
                color: LinearRgb(p.color_linear),
                points: p.points.clone(),
            });
        }
        Some(Self {
            nodes,
            paths,
            iterations_used: export.iterations_used,
            converged: export.converged,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{collapse_chains, GenerationTokens};
    use crate::layout::compute_layout;
    use crate::segment::SegmentationMode;

    #[test]
    fn export_round_trip() {
        let gens = vec![
            GenerationTokens::new("g0", "a", "the red fox", SegmentationMode::Space),
            GenerationTokens::new("g1", "b", "a blue bird", SegmentationMode::Space),
        ];
        let l = collapse_chains(&TokenLattice::build_chains(SegmentationMode::Space, gens));
        let params = LayoutParams::default();
        let r = compute_layout(&l, &params).unwrap();
        let e = LayoutExport::new(&r, &params);
        let json = serde_json::to_string(&e).unwrap();
        let back: LayoutExport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, e);
        let rebuilt = LayoutResult::from_export(&back, &l).unwrap();
        assert_eq!(
            rebuilt.nodes.iter().map(|n| n.y.to_bits()).collect::<Vec<_>>(),
            r.nodes.iter().map(|n| n.y.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(rebuilt.paths, r.paths);
    }
}
