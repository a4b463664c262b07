//! Versioned JSON and debugging DOT forms of a lattice.

use super::{ClusterKey, GenerationTokens, LatticeViolation, TokenLattice};
use crate::segment::{segment_with_id, SegmentationMode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

pub const LATTICE_EXPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberExport {
    pub gen: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeExport {
    pub id: String,
    pub label: String,
    pub members: Vec<MemberExport>,
    pub frequency: usize,
    #[serde(default)]
    pub prompt_counts: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalExport {
    pub gen: String,
    pub prompt_id: String,
    pub path: Vec<String>,
    /// Exact text covered by each step, trailing separator included.
    pub spans: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub leading: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeExport {
    pub version: u32,
    pub mode: SegmentationMode,
    pub threshold: Option<f64>,
    pub nodes: Vec<NodeExport>,
    pub traversals: Vec<TraversalExport>,
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("invalid lattice JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported lattice export version {0}")]
    Version(u32),
    #[error("traversal of `{gen}` references unknown node `{node}`")]
    UnknownNode { gen: String, node: String },
    #[error("node `{node}` has no member for generation `{gen}`")]
    MissingMember { gen: String, node: String },
    #[error("lattice export is inconsistent: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Violation(#[from] LatticeViolation),
}

impl TokenLattice {
    pub fn to_export(&self) -> LatticeExport {
        let nodes = self
            .nodes()
            .iter()
            .map(|n| NodeExport {
                id: n.id.0.clone(),
                label: n.label.clone(),
                members: n
                    .members
                    .iter()
                    .map(|m| MemberExport {
                        gen: m.generation.clone(),
                        start: m.start,
                        end: m.end,
                    })
                    .collect(),
                frequency: n.frequency,
                prompt_counts: n.prompt_counts.clone(),
            })
            .collect();
        let traversals = self
            .traversals()
            .iter()
            .zip(self.generations())
            .map(|(t, g)| TraversalExport {
                gen: g.id.clone(),
                prompt_id: g.prompt_id.clone(),
                path: t.steps.iter().map(|s| self.node(s.node).id.0.clone()).collect(),
                spans: t.steps.iter().map(|s| g.sequence.span_text(s.start, s.end)).collect(),
                leading: g.sequence.leading.clone(),
            })
            .collect();
        LatticeExport {
            version: LATTICE_EXPORT_VERSION,
            mode: self.mode(),
            threshold: self.threshold(),
            nodes,
            traversals,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_export()).expect("lattice export serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ExportError> {
        Self::from_export(&serde_json::from_str(json)?)
    }

    /// Rebuilds a lattice from its export, re-segmenting each generation's
    /// text and checking every structural invariant.
    pub fn from_export(export: &LatticeExport) -> Result<Self, ExportError> {
        if export.version != LATTICE_EXPORT_VERSION {
            return Err(ExportError::Version(export.version));
        }
        let node_of: HashMap<&str, usize> = export
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.as_str(), i))
            .collect();
        if node_of.len() != export.nodes.len() {
            return Err(ExportError::Inconsistent("duplicate node id".into()));
        }
        let mut ranges: HashMap<(usize, &str), (usize, usize)> = HashMap::new();
        for (i, n) in export.nodes.iter().enumerate() {
            for m in &n.members {
                if ranges.insert((i, m.gen.as_str()), (m.start, m.end)).is_some() {
                    return Err(ExportError::Inconsistent(format!(
                        "node `{}` visited twice by `{}`",
                        n.id, m.gen
                    )));
                }
            }
        }

        let mut generations = Vec::with_capacity(export.traversals.len());
        let mut steps = Vec::with_capacity(export.traversals.len());
        for t in &export.traversals {
            if t.path.len() != t.spans.len() {
                return Err(ExportError::Inconsistent(format!(
                    "traversal `{}` has {} nodes but {} spans",
                    t.gen,
                    t.path.len(),
                    t.spans.len()
                )));
            }
            let text = format!("{}{}", t.leading, t.spans.concat());
            let sequence = segment_with_id(&text, export.mode, &t.gen);
            let mut gen_steps: Vec<(ClusterKey, usize, usize)> = Vec::with_capacity(t.path.len());
            for (node_id, span) in t.path.iter().zip(&t.spans) {
                let &node = node_of.get(node_id.as_str()).ok_or_else(|| ExportError::UnknownNode {
                    gen: t.gen.clone(),
                    node: node_id.clone(),
                })?;
                let &(start, end) = ranges
                    .get(&(node, t.gen.as_str()))
                    .ok_or_else(|| ExportError::MissingMember {
                        gen: t.gen.clone(),
                        node: node_id.clone(),
                    })?;
                if end > sequence.len() || start >= end || &sequence.span_text(start, end) != span {
                    return Err(ExportError::Inconsistent(format!(
                        "span of `{}` in `{}` does not match its text",
                        node_id, t.gen
                    )));
                }
                gen_steps.push((node, start, end));
            }
            generations.push(GenerationTokens {
                id: t.gen.clone(),
                prompt_id: t.prompt_id.clone(),
                sequence,
            });
            steps.push(gen_steps);
        }

        let lattice = TokenLattice::from_assignment(export.mode, export.threshold, Arc::from(generations), steps);
        lattice.validate()?;
        if lattice.nodes().len() != export.nodes.len() {
            return Err(ExportError::Inconsistent("node never traversed".into()));
        }
        for n in &export.nodes {
            let Some(i) = lattice.node_index(&super::NodeId(n.id.clone())) else {
                return Err(ExportError::Inconsistent(format!(
                    "node id `{}` does not match its members",
                    n.id
                )));
            };
            let rebuilt = lattice.node(i);
            if rebuilt.label != n.label || rebuilt.frequency != n.frequency {
                return Err(ExportError::Inconsistent(format!("node `{}` label or frequency", n.id)));
            }
        }
        Ok(lattice)
    }

    /// Graphviz rendering of bare adjacency. Paths through this graph may
    /// mix prefixes and suffixes of different generations.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph lattice {\n");
        out.push_str("  // adjacency only: paths not faithful\n");
        out.push_str("  label=\"adjacency only (paths not faithful)\";\n  rankdir=LR;\n");
        for n in self.nodes() {
            let _ = writeln!(
                out,
                "  \"{}\" [label=\"{}\", freq={}];",
                n.id,
                escape_dot(&n.label),
                n.frequency
            );
        }
        for ((from, to), count) in self.adjacency() {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [weight={count}, penwidth={}];",
                self.node(from).id,
                self.node(to).id,
                1 + count.ilog2()
            );
        }
        out.push_str("}\n");
        out
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', "\\n")
}
