use super::TokenLattice;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Summary numbers used as diversity proxies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeStats {
    pub node_count: usize,
    pub traversal_edge_count: usize,
    /// Nodes divided by total tokens; 1.0 for an empty lattice.
    pub compression_ratio: f64,
    /// Distinct node-to-node edges per node.
    pub mean_out_degree: f64,
    /// Unique node sequences over all traversals.
    pub distinct_path_count: usize,
    /// Token-level clusters before chain collapse.
    pub token_cluster_count: usize,
    pub total_tokens: usize,
    pub generation_count: usize,
}

impl LatticeStats {
    pub fn of(lattice: &TokenLattice) -> Self {
        let node_count = lattice.nodes().len();
        let total_tokens = lattice.total_tokens();
        let traversal_edge_count = lattice
            .traversals()
            .iter()
            .map(|t| t.steps.len().saturating_sub(1))
            .sum();
        let distinct_edges = lattice.adjacency().len();
        let paths: HashSet<Vec<usize>> = lattice.traversals().iter().map(|t| t.path().collect()).collect();
        Self {
            node_count,
            traversal_edge_count,
            compression_ratio: if total_tokens == 0 {
                1.0
            } else {
                node_count as f64 / total_tokens as f64
            },
            mean_out_degree: if node_count == 0 {
                0.0
            } else {
                distinct_edges as f64 / node_count as f64
            },
            distinct_path_count: paths.len(),
            token_cluster_count: lattice.token_cluster_count(),
            total_tokens,
            generation_count: lattice.generations().len(),
        }
    }
}
