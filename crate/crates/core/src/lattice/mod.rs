//! The merged token lattice.
//!
//! Each generation starts as its own chain of token nodes. Similar tokens
//! across generations are then merged greedily, refusing any merge that
//! would close a cycle, and finally unbranched runs are collapsed into
//! single span nodes. Every generation keeps an explicit traversal (its
//! ordered node path), so rendering never relies on bare adjacency and never
//! implies a transition that no generation took.

mod builder;
mod collapse;
mod export;
mod merge;
mod stats;

pub use builder::{LatticeBuilder, LatticeConfig, DEFAULT_MERGE_THRESHOLD};
pub use collapse::collapse_chains;
pub use export::{ExportError, LatticeExport, MemberExport, NodeExport, TraversalExport, LATTICE_EXPORT_VERSION};
pub use merge::merge_similar;
pub use stats::LatticeStats;

use crate::generation::RawGeneration;
use crate::segment::{segment_with_id, SegmentationMode, TokenSequence};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

/// A segmented generation with its prompt membership.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationTokens {
    pub id: String,
    pub prompt_id: String,
    pub sequence: TokenSequence,
}

impl GenerationTokens {
    pub fn new(id: impl Into<String>, prompt_id: impl Into<String>, text: &str, mode: SegmentationMode) -> Self {
        let id = id.into();
        let sequence = segment_with_id(text, mode, &id);
        Self {
            id,
            prompt_id: prompt_id.into(),
            sequence,
        }
    }

    pub fn from_raw(raw: &RawGeneration, mode: SegmentationMode) -> Self {
        Self::new(raw.id.clone(), raw.prompt_id.clone(), &raw.text, mode)
    }

    pub fn text(&self) -> String {
        crate::segment::reconstruct(&self.sequence)
    }
}

/// Content-addressed node identifier.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

/// A token range `start..end` of one generation.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Member {
    pub generation: String,
    pub start: usize,
    pub end: usize,
}

impl Member {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeNode {
    pub id: NodeId,
    pub label: String,
    /// Sorted by generation order in the lattice, then start.
    pub members: Vec<Member>,
    /// Number of distinct generations among the members.
    pub frequency: usize,
    pub prompt_counts: BTreeMap<String, usize>,
}

/// One visit of a generation to a node, covering tokens `start..end`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Step {
    pub node: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Traversal {
    pub generation: String,
    pub steps: Vec<Step>,
}

impl Traversal {
    pub fn path(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.node)
    }
}

/// A transition taken by one generation between consecutive steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraversalEdge {
    pub from: usize,
    pub to: usize,
    pub generation: usize,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeViolation {
    #[error("generation `{0}` does not reconstruct its text")]
    PathMismatch(String),
    #[error("generation `{generation}` has a gap or overlap at step {step}")]
    Discontiguous { generation: String, step: usize },
    #[error("node `{0}` has members inconsistent with traversals")]
    MemberMismatch(String),
    #[error("node `{0}` has a frequency inconsistent with its members")]
    BadFrequency(String),
    #[error("node adjacency contains a cycle")]
    Cycle,
    #[error("node `{0}` is never visited")]
    Unvisited(String),
    #[error("node `{0}` has a label that matches none of its members")]
    BadLabel(String),
}

#[derive(Clone, Debug)]
pub struct TokenLattice {
    mode: SegmentationMode,
    threshold: Option<f64>,
    generations: Arc<[GenerationTokens]>,
    nodes: Vec<LatticeNode>,
    traversals: Vec<Traversal>,
    index: HashMap<NodeId, usize>,
}

impl PartialEq for TokenLattice {
    fn eq(&self, other: &Self) -> bool {
        self.mode == other.mode
            && self.threshold.map(f64::to_bits) == other.threshold.map(f64::to_bits)
            && self.generations == other.generations
            && self.nodes == other.nodes
            && self.traversals == other.traversals
    }
}

/// Grouping key used while assembling a lattice; steps sharing a key become
/// one node.
pub(crate) type ClusterKey = usize;

impl TokenLattice {
    /// One node per token occurrence, one chain per generation.
    pub fn build_chains(mode: SegmentationMode, generations: impl Into<Arc<[GenerationTokens]>>) -> Self {
        let generations = generations.into();
        let mut next = 0;
        let steps = generations
            .iter()
            .map(|g| {
                (0..g.sequence.len())
                    .map(|i| {
                        next += 1;
                        (next - 1, i, i + 1)
                    })
                    .collect()
            })
            .collect();
        Self::from_assignment(mode, None, generations, steps)
    }

    /// Segments raw generations with `mode` and builds chains.
    pub fn chains_from_raw(mode: SegmentationMode, raw: &[RawGeneration]) -> Self {
        let gens: Vec<GenerationTokens> = raw.iter().map(|r| GenerationTokens::from_raw(r, mode)).collect();
        Self::build_chains(mode, gens)
    }

    pub(crate) fn from_assignment(
        mode: SegmentationMode,
        threshold: Option<f64>,
        generations: Arc<[GenerationTokens]>,
        steps: Vec<Vec<(ClusterKey, usize, usize)>>,
    ) -> Self {
        debug_assert_eq!(steps.len(), generations.len());
        let mut groups: HashMap<ClusterKey, Vec<(usize, usize, usize)>> = HashMap::new();
        for (g, gen_steps) in steps.iter().enumerate() {
            for &(key, start, end) in gen_steps {
                groups.entry(key).or_default().push((g, start, end));
            }
        }
        let mut ordered: Vec<(ClusterKey, Vec<(usize, usize, usize)>)> = groups
            .into_iter()
            .map(|(key, mut members)| {
                members.sort_unstable();
                (key, members)
            })
            .collect();
        ordered.sort_unstable_by(|a, b| a.1[0].cmp(&b.1[0]));

        let mut node_of_key: HashMap<ClusterKey, usize> = HashMap::with_capacity(ordered.len());
        let mut nodes = Vec::with_capacity(ordered.len());
        for (node_index, (key, members)) in ordered.into_iter().enumerate() {
            node_of_key.insert(key, node_index);
            let (g0, s0, e0) = members[0];
            let label = generations[g0].sequence.span_label(s0, e0);
            let mut prompt_counts: BTreeMap<String, usize> = BTreeMap::new();
            let mut last_gen = usize::MAX;
            let mut frequency = 0;
            for &(g, _, _) in &members {
                if g != last_gen {
                    frequency += 1;
                    *prompt_counts.entry(generations[g].prompt_id.clone()).or_default() += 1;
                    last_gen = g;
                }
            }
            let members: Vec<Member> = members
                .into_iter()
                .map(|(g, start, end)| Member {
                    generation: generations[g].id.clone(),
                    start,
                    end,
                })
                .collect();
            nodes.push(LatticeNode {
                id: content_id(&members),
                label,
                members,
                frequency,
                prompt_counts,
            });
        }

        let traversals = steps
            .into_iter()
            .zip(generations.iter())
            .map(|(gen_steps, g)| Traversal {
                generation: g.id.clone(),
                steps: gen_steps
                    .into_iter()
                    .map(|(key, start, end)| Step {
                        node: node_of_key[&key],
                        start,
                        end,
                    })
                    .collect(),
            })
            .collect();

        let index = nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), i)).collect();
        Self {
            mode,
            threshold,
            generations,
            nodes,
            traversals,
            index,
        }
    }

    pub fn mode(&self) -> SegmentationMode {
        self.mode
    }

    /// Merge threshold the lattice was built with; `None` for raw chains.
    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn generations(&self) -> &[GenerationTokens] {
        &self.generations
    }

    pub(crate) fn generations_arc(&self) -> Arc<[GenerationTokens]> {
        Arc::clone(&self.generations)
    }

    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &LatticeNode {
        &self.nodes[index]
    }

    pub fn node_index(&self, id: &NodeId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn traversals(&self) -> &[Traversal] {
        &self.traversals
    }

    pub fn generation_index(&self, id: &str) -> Option<usize> {
        self.generations.iter().position(|g| g.id == id)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_tokens(&self) -> usize {
        self.generations.iter().map(|g| g.sequence.len()).sum()
    }

    /// Every consecutive step pair of every generation.
    pub fn traversal_edges(&self) -> Vec<TraversalEdge> {
        let mut out = Vec::new();
        for (g, t) in self.traversals.iter().enumerate() {
            for (k, w) in t.steps.windows(2).enumerate() {
                out.push(TraversalEdge {
                    from: w[0].node,
                    to: w[1].node,
                    generation: g,
                    step_index: k,
                });
            }
        }
        out
    }

    /// Node-to-node edges with the number of traversals taking each.
    pub fn adjacency(&self) -> BTreeMap<(usize, usize), usize> {
        let mut out = BTreeMap::new();
        for t in &self.traversals {
            for w in t.steps.windows(2) {
                *out.entry((w[0].node, w[1].node)).or_insert(0) += 1;
            }
        }
        out
    }

    /// Distinct predecessors of each node, ascending.
    pub fn parents(&self) -> Vec<Vec<usize>> {
        let mut parents = vec![Vec::new(); self.nodes.len()];
        for &(from, to) in self.adjacency().keys() {
            parents[to].push(from);
        }
        for p in &mut parents {
            p.sort_unstable();
            p.dedup();
        }
        parents
    }

    /// Kahn order with ties broken by node index; `None` if cyclic.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.nodes.len();
        let mut indegree = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for &(from, to) in self.adjacency().keys() {
            succ[from].push(to);
            indegree[to] += 1;
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<usize>> =
            (0..n).filter(|&i| indegree[i] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(u)) = ready.pop() {
            order.push(u);
            for &v in &succ[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(std::cmp::Reverse(v));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Node sequence of one generation.
    pub fn path_of(&self, generation: usize) -> Vec<&NodeId> {
        self.traversals[generation]
            .steps
            .iter()
            .map(|s| &self.nodes[s.node].id)
            .collect()
    }

    /// Text recovered by walking a generation's traversal.
    pub fn reconstruct(&self, generation: usize) -> String {
        let g = &self.generations[generation];
        let mut out = g.sequence.leading.clone();
        for step in &self.traversals[generation].steps {
            out.push_str(&g.sequence.span_text(step.start, step.end));
        }
        out
    }

    /// Number of token-level clusters this lattice was assembled from. For
    /// collapsed lattices this counts the nodes the collapse absorbed.
    pub fn token_cluster_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.members.first().map_or(0, Member::len))
            .sum()
    }

    pub fn stats(&self) -> LatticeStats {
        LatticeStats::of(self)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), LatticeViolation> {
        let mut seen: Vec<Vec<Member>> = vec![Vec::new(); self.nodes.len()];
        for (g, t) in self.traversals.iter().enumerate() {
            let gen = &self.generations[g];
            let mut cursor = 0;
            for (k, step) in t.steps.iter().enumerate() {
                if step.start != cursor || step.end <= step.start {
                    return Err(LatticeViolation::Discontiguous {
                        generation: gen.id.clone(),
                        step: k,
                    });
                }
                cursor = step.end;
                seen[step.node].push(Member {
                    generation: gen.id.clone(),
                    start: step.start,
                    end: step.end,
                });
            }
            if cursor != gen.sequence.len() || self.reconstruct(g) != gen.text() {
                return Err(LatticeViolation::PathMismatch(gen.id.clone()));
            }
        }
        let order: HashMap<&str, usize> = self
            .generations
            .iter()
            .enumerate()
            .map(|(i, g)| (g.id.as_str(), i))
            .collect();
        for (node, mut visits) in self.nodes.iter().zip(seen) {
            if visits.is_empty() {
                return Err(LatticeViolation::Unvisited(node.id.0.clone()));
            }
            visits.sort_by_key(|m| (order[m.generation.as_str()], m.start));
            if visits != node.members {
                return Err(LatticeViolation::MemberMismatch(node.id.0.clone()));
            }
            let mut gens: Vec<&str> = visits.iter().map(|m| m.generation.as_str()).collect();
            gens.dedup();
            let prompt_total: usize = node.prompt_counts.values().sum();
            if node.frequency != gens.len() || prompt_total != gens.len() {
                return Err(LatticeViolation::BadFrequency(node.id.0.clone()));
            }
            let m = &node.members[0];
            let g = &self.generations[order[m.generation.as_str()]];
            if g.sequence.span_label(m.start, m.end) != node.label {
                return Err(LatticeViolation::BadLabel(node.id.0.clone()));
            }
        }
        if !self.is_acyclic() {
            return Err(LatticeViolation::Cycle);
        }
        Ok(())
    }
}

fn content_id(members: &[Member]) -> NodeId {
    let mut sorted: Vec<&Member> = members.iter().collect();
    sorted.sort();
    let mut hasher = Sha256::new();
    for m in sorted {
        hasher.update(m.generation.as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.start.to_string().as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.end.to_string().as_bytes());
        hasher.update([0x1e]);
    }
    let digest = hasher.finalize();
    NodeId(hex::encode(&digest[..8]))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn gens(texts: &[&str]) -> Vec<GenerationTokens> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| GenerationTokens::new(format!("g{i}"), "p", t, SegmentationMode::Space))
            .collect()
    }

    #[test]
    fn single_chain() {
        let lattice = TokenLattice::build_chains(SegmentationMode::Space, gens(&["a b c"]));
        assert_eq!(lattice.nodes().len(), 3);
        assert_eq!(lattice.traversal_edges().len(), 2);
        assert!(lattice.validate().is_ok());
        assert_eq!(lattice.threshold(), None);
    }

    #[test]
    fn two_chains() {
        let lattice = TokenLattice::build_chains(SegmentationMode::Space, gens(&["a b c", "a b d"]));
        assert_eq!(lattice.nodes().len(), 6);
        assert_eq!(lattice.traversal_edges().len(), 4);
        assert!(lattice.is_acyclic());
        assert!(lattice.validate().is_ok());
    }

    #[test]
    fn empty_input() {
        let lattice = TokenLattice::build_chains(SegmentationMode::Space, Vec::new());
        assert!(lattice.is_empty());
        assert!(lattice.traversals().is_empty());
        assert!(lattice.validate().is_ok());
    }

    #[test]
    fn empty_generation_is_an_empty_traversal() {
        let lattice = TokenLattice::build_chains(SegmentationMode::Space, gens(&["", "  x"]));
        assert_eq!(lattice.nodes().len(), 1);
        assert!(lattice.traversals()[0].steps.is_empty());
        assert_eq!(lattice.reconstruct(1), "  x");
        assert!(lattice.validate().is_ok());
    }

    #[test]
    fn ids_are_content_addressed() {
        let a = TokenLattice::build_chains(SegmentationMode::Space, gens(&["a b", "c"]));
        let b = TokenLattice::build_chains(SegmentationMode::Space, gens(&["a b", "c"]));
        assert_eq!(a, b);
        let ids: std::collections::HashSet<_> = a.nodes().iter().map(|n| n.id.clone()).collect();
        assert_eq!(ids.len(), 3);
        assert_eq!(a.node_index(&a.nodes()[2].id), Some(2));
    }
}
