//! Deterministic 2-D layout of a token lattice.
//!
//! Horizontal positions follow the lattice order exactly: roots sit at a
//! fixed left offset and every other node is placed between the leftmost
//! and rightmost positions its parents suggest. Vertical positions come from
//! a damped simulation of three forces (centering weighted by frequency, one
//! spring per traversed edge, ellipse collision), run until motion stops.

mod channels;
mod export;
mod svg;

pub use channels::{
    longtail_opacity, node_color, node_size, palette_color, LinearRgb, MAX_SIZE_SCALE, MIN_LONGTAIL_OPACITY,
    MIN_SIZE_SCALE, PALETTE_HEX,
};
pub use export::{LayoutExport, LayoutNodeExport, PathExport, LAYOUT_EXPORT_VERSION};
pub use svg::{render_svg, SvgOptions};

use crate::lattice::{NodeId, TokenLattice};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

/// Overlap tolerance used for the convergence test.
pub const OVERLAP_TOLERANCE: f64 = 1e-3;

const ALPHA_MIN: f64 = 0.001;
const JITTER: f64 = 2.0;
const LABEL_CHARS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub left_offset: f64,
    pub horizontal_gap: f64,
    /// Parent interpolation: 0 = leftmost parent-derived position, 1 = rightmost.
    pub lambda: f64,
    /// Centering strength per generation visiting a node.
    pub center_strength: f64,
    /// Spring strength per generation traversing an edge.
    pub spring_stiffness: f64,
    pub collision_padding: f64,
    pub collision_passes: usize,
    pub max_iterations: usize,
    pub convergence_epsilon: f64,
    pub velocity_decay: f64,
    pub alpha_decay: f64,
    pub midline: f64,
    pub seed: u64,
    /// Longtail slider in `[0, 1]`; 0 keeps every node opaque.
    pub longtail: f64,
    pub char_width: f64,
    pub font_size: f64,
    /// Vertical spacing between parallel generation strokes inside a node.
    pub stroke_spacing: f64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            left_offset: 40.0,
            horizontal_gap: 24.0,
            lambda: 0.5,
            center_strength: 0.05,
            spring_stiffness: 0.08,
            collision_padding: 4.0,
            collision_passes: 2,
            max_iterations: 1000,
            convergence_epsilon: 0.1,
            velocity_decay: 0.4,
            alpha_decay: 1.0 - ALPHA_MIN.powf(1.0 / 300.0),
            midline: 0.0,
            seed: 42,
            longtail: 0.0,
            char_width: 7.0,
            font_size: 12.0,
            stroke_spacing: 1.5,
        }
    }
}

impl LayoutParams {
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |what: &str| Err(LayoutError::InvalidParams(what.to_string()));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1");
        }
        if !(self.convergence_epsilon > 0.0) {
            return bad("convergence_epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.longtail) {
            return bad("longtail must be in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.velocity_decay) || !(0.0..1.0).contains(&self.alpha_decay) {
            return bad("decay rates must be in [0, 1)");
        }
        let finite = [
            self.left_offset,
            self.horizontal_gap,
            self.center_strength,
            self.spring_stiffness,
            self.collision_padding,
            self.midline,
            self.char_width,
            self.font_size,
            self.stroke_spacing,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("parameters must be finite");
        }
        if self.center_strength < 0.0 || self.spring_stiffness < 0.0 || self.collision_padding < 0.0 {
            return bad("strengths and padding must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("invalid layout parameters: {0}")]
    InvalidParams(String),
    #[error("lattice adjacency is cyclic")]
    Cyclic,
}

/// Optional caller-supplied geometry and colors.
#[derive(Clone, Debug, Default)]
pub struct LayoutInputs {
    /// Prompt colors; defaults to palette order of first appearance.
    pub palette: Option<BTreeMap<String, LinearRgb>>,
    /// `(rx, ry)` per node, e.g. from measured label metrics.
    pub radii: BTreeMap<NodeId, (f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    pub node_id: NodeId,
    pub label: String,
    pub frequency: usize,
    pub x: f64,
    pub y: f64,
    pub rx: f64,
    pub ry: f64,
    pub size_scale: f64,
    pub opacity: f64,
    pub color: LinearRgb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationPath {
    pub generation: String,
    pub prompt_id: String,
    pub color: LinearRgb,
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutResult {
    pub nodes: Vec<LayoutNode>,
    pub paths: Vec<GenerationPath>,
    pub iterations_used: usize,
    pub converged: bool,
}

impl LayoutResult {
    /// Smallest pairwise ellipse-distance metric; `f64::INFINITY` below two
    /// nodes. Values below 1 mean overlap.
    pub fn min_overlap_metric(&self) -> f64 {
        let mut min = f64::INFINITY;
        for (i, a) in self.nodes.iter().enumerate() {
            for b in &self.nodes[i + 1..] {
                min = min.min(overlap_metric(a, b));
            }
        }
        min
    }

    pub fn bounds(&self) -> Option<[f64; 4]> {
        let mut it = self.nodes.iter();
        let first = it.next()?;
        let mut b = [
            first.x - first.rx,
            first.y - first.ry,
            first.x + first.rx,
            first.y + first.ry,
        ];
        for n in it {
            b[0] = b[0].min(n.x - n.rx);
            b[1] = b[1].min(n.y - n.ry);
            b[2] = b[2].max(n.x + n.rx);
            b[3] = b[3].max(n.y + n.ry);
        }
        Some(b)
    }
}

/// `sqrt((dx / (rx_a + rx_b))^2 + (dy / (ry_a + ry_b))^2)`; at least 1 when
/// the two ellipses keep clear of each other.
pub fn overlap_metric(a: &LayoutNode, b: &LayoutNode) -> f64 {
    let dx = (a.x - b.x) / (a.rx + b.rx);
    let dy = (a.y - b.y) / (a.ry + b.ry);
    (dx * dx + dy * dy).sqrt()
}

/// x for a node given the positions its parents suggest.
pub fn horizontal_target(parent_derived: &[f64], lambda: f64, left_offset: f64) -> f64 {
    if parent_derived.is_empty() {
        return left_offset;
    }
    let (lo, hi) = parent_derived
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    lo + lambda * (hi - lo)
}

/// Prompt colors in order of first appearance among the generations.
pub fn default_palette(lattice: &TokenLattice) -> BTreeMap<String, LinearRgb> {
    let mut palette = BTreeMap::new();
    for g in lattice.generations() {
        let next = palette.len();
        palette
            .entry(g.prompt_id.clone())
            .or_insert_with(|| palette_color(next));
    }
    palette
}

/// Display label, shortened to a fixed number of characters.
pub fn display_label(label: &str) -> String {
    let trimmed = label.trim();
    if trimmed.chars().count() <= LABEL_CHARS {
        trimmed.to_string()
    } else {
        let mut s: String = trimmed.chars().take(LABEL_CHARS - 1).collect();
        s.push('…');
        s
    }
}

pub fn compute_layout(lattice: &TokenLattice, params: &LayoutParams) -> Result<LayoutResult, LayoutError> {
    compute_layout_with(lattice, params, &LayoutInputs::default())
}

pub fn compute_layout_with(
    lattice: &TokenLattice,
    params: &LayoutParams,
    inputs: &LayoutInputs,
) -> Result<LayoutResult, LayoutError> {
    params.validate()?;
    let order = lattice.topological_order().ok_or(LayoutError::Cyclic)?;
    let total = lattice.generations().len();
    let n = lattice.nodes().len();

    let palette = inputs.palette.clone().unwrap_or_else(|| default_palette(lattice));
    let mut size = Vec::with_capacity(n);
    let mut rx = Vec::with_capacity(n);
    let mut ry = Vec::with_capacity(n);
    for node in lattice.nodes() {
        let s = node_size(node.frequency, total);
        let (w, h) = inputs.radii.get(&node.id).copied().unwrap_or_else(|| {
            let chars = display_label(&node.label).chars().count().max(1) as f64;
            (
                chars * params.char_width * s / 2.0 + 6.0,
                params.font_size * s / 2.0 + 5.0,
            )
        });
        size.push(s);
        rx.push(w.max(1e-3));
        ry.push(h.max(1e-3));
    }

    let parents = lattice.parents();
    let mut x = vec![0.0; n];
    let mut derived = Vec::new();
    for &u in &order {
        derived.clear();
        derived.extend(parents[u].iter().map(|&p| x[p] + rx[p] + params.horizontal_gap + rx[u]));
        x[u] = horizontal_target(&derived, params.lambda, params.left_offset);
    }

    let mut springs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for ((a, b), count) in lattice.adjacency() {
        let w = params.spring_stiffness * count as f64;
        springs[a].push((b, w));
        springs[b].push((a, w));
    }
    let center: Vec<f64> = lattice
        .nodes()
        .iter()
        .map(|node| params.center_strength * node.frequency as f64)
        .collect();

    let mut y: Vec<f64> = lattice
        .nodes()
        .iter()
        .map(|node| params.midline + jitter(params.seed, node.id.as_str()))
        .collect();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let geom = Geometry {
        x: &x,
        rx: &rx,
        ry: &ry,
    };

    let mut alpha = 1.0f64;
    let mut converged = false;
    let mut iterations_used = 0;
    for iter in 1..=params.max_iterations {
        iterations_used = iter;
        alpha = (alpha * (1.0 - params.alpha_decay)).max(ALPHA_MIN);
        for i in 0..n {
            let mut weight = center[i];
            let mut pull = center[i] * params.midline;
            for &(j, w) in &springs[i] {
                weight += w;
                pull += w * y[j];
            }
            let f = if weight > 0.0 {
                (1.0 - (-weight * alpha).exp()) * (pull / weight - y[i])
            } else {
                0.0
            };
            v[i] = (v[i] + f) * (1.0 - params.velocity_decay);
            next[i] = y[i] + v[i];
        }
        for _ in 0..params.collision_passes {
            geom.project(&mut next, params.collision_padding);
        }
        let displacement = next.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut y, &mut next);
        if displacement < params.convergence_epsilon && geom.max_violation(&y) <= OVERLAP_TOLERANCE {
            converged = true;
            break;
        }
    }

    let nodes: Vec<LayoutNode> = lattice
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| LayoutNode {
            node_id: node.id.clone(),
            label: node.label.clone(),
            frequency: node.frequency,
            x: x[i],
            y: y[i],
            rx: rx[i],
            ry: ry[i],
            size_scale: size[i],
            opacity: longtail_opacity(node.frequency, total, params.longtail),
            color: node_color(&node.prompt_counts, &palette),
        })
        .collect();

    // Generations visiting a node are stacked in generation order so the
    // strokes of a shared run form a visibly thicker bundle.
    let mut rank = vec![0usize; n];
    let paths = lattice
        .traversals()
        .iter()
        .zip(lattice.generations())
        .map(|(t, g)| {
            let mut points = Vec::with_capacity(2 * t.steps.len());
            for step in &t.steps {
                let k = step.node;
                let m = lattice.node(k).frequency.max(1) as f64;
                let spacing = params.stroke_spacing.min(1.6 * ry[k] / m);
                let off = (rank[k] as f64 - (m - 1.0) / 2.0) * spacing;
                rank[k] += 1;
                let reach = 0.6 * rx[k];
                points.push([x[k] - reach, y[k] + off]);
                points.push([x[k] + reach, y[k] + off]);
            }
            GenerationPath {
                generation: g.id.clone(),
                prompt_id: g.prompt_id.clone(),
                color: palette.get(&g.prompt_id).copied().unwrap_or(LinearRgb([0.5; 3])),
                points,
            }
        })
        .collect();

    Ok(LayoutResult {
        nodes,
        paths,
        iterations_used,
        converged,
    })
}

fn jitter(seed: u64, id: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    let d = h.finalize();
    let bits = u64::from_le_bytes(d[..8].try_into().expect("digest has 8 bytes"));
    ((bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * JITTER
}

struct Geometry<'a> {
    x: &'a [f64],
    rx: &'a [f64],
    ry: &'a [f64],
}

impl Geometry<'_> {
    fn grid(&self, y: &[f64], pad: f64) -> Grid {
        let cw = 2.0 * (self.rx.iter().fold(0.0f64, |m, r| m.max(*r)) + pad);
        let ch = 2.0 * (self.ry.iter().fold(0.0f64, |m, r| m.max(*r)) + pad);
        let cols: Vec<i64> = self.x.iter().map(|&x| (x / cw).floor() as i64).collect();
        let base = cols.iter().copied().min().unwrap_or(0);
        let width = cols.iter().map(|c| (c - base) as usize + 1).max().unwrap_or(0);
        let mut columns: Vec<Vec<(i64, u32)>> = vec![Vec::new(); width];
        for i in 0..y.len() {
            columns[(cols[i] - base) as usize].push(((y[i] / ch).floor() as i64, i as u32));
        }
        for c in &mut columns {
            c.sort_unstable();
        }
        Grid {
            ch,
            cols,
            base,
            columns,
        }
    }

    /// Pushes overlapping pairs apart vertically until their padded
    /// ellipses clear.
    fn project(&self, y: &mut [f64], pad: f64) {
        let grid = self.grid(y, pad);
        for i in 0..y.len() {
            for &(_, j) in grid.near(i, y[i]) {
                let j = j as usize;
                if j <= i {
                    continue;
                }
                let sx = self.rx[i] + self.rx[j] + 2.0 * pad;
                let dx = (self.x[j] - self.x[i]) / sx;
                if dx.abs() >= 1.0 {
                    continue;
                }
                let need = (self.ry[i] + self.ry[j] + 2.0 * pad) * (1.0 - dx * dx).sqrt();
                let dy = y[j] - y[i];
                if dy.abs() >= need {
                    continue;
                }
                let dir = if dy > 0.0 || (dy == 0.0 && j > i) { 1.0 } else { -1.0 };
                let push = (need - dy.abs()) / 2.0;
                y[i] -= dir * push;
                y[j] += dir * push;
            }
        }
    }

    /// Largest `1 - metric` over all pairs, on unpadded radii.
    fn max_violation(&self, y: &[f64]) -> f64 {
        let grid = self.grid(y, 0.0);
        let mut worst = 0.0f64;
        for i in 0..y.len() {
            for &(_, j) in grid.near(i, y[i]) {
                let j = j as usize;
                if j <= i {
                    continue;
                }
                let dx = (self.x[j] - self.x[i]) / (self.rx[i] + self.rx[j]);
                let dy = (y[j] - y[i]) / (self.ry[i] + self.ry[j]);
                worst = worst.max(1.0 - (dx * dx + dy * dy).sqrt());
            }
        }
        worst
    }
}

/// Uniform grid, one column vector per cell column, sorted by (row, index).
struct Grid {
    ch: f64,
    cols: Vec<i64>,
    base: i64,
    columns: Vec<Vec<(i64, u32)>>,
}

impl Grid {
    /// Candidates in the 3x3 cells around node `i` at height `y`, in column,
    /// row, index order.
    fn near(&self, i: usize, y: f64) -> impl Iterator<Item = &(i64, u32)> {
        let cx = self.cols[i] - self.base;
        let cy = (y / self.ch).floor() as i64;
        (cx - 1..=cx + 1)
            .filter_map(|c| usize::try_from(c).ok().and_then(|c| self.columns.get(c)))
            .flat_map(move |col| {
                let lo = col.partition_point(|&(r, _)| r < cy - 1);
                let hi = col.partition_point(|&(r, _)| r <= cy + 1);
                &col[lo..hi]
            })
    }
}
