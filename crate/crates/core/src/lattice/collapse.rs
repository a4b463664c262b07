use super::{ClusterKey, TokenLattice};

/// Collapses every unbranched run of nodes into one span node.
///
/// An edge `u -> v` is absorbed when every generation visiting `u` steps
/// next to `v` and every generation visiting `v` arrives from `u`. Each
/// collapsed node keeps the token range of every member generation, so
/// traversals still reconstruct their text exactly.
pub fn collapse_chains(lattice: &TokenLattice) -> TokenLattice {
    let n = lattice.nodes().len();
    let adjacency = lattice.adjacency();

    // joins_next[u] = Some(v) when u's only continuation is v and v is only
    // ever entered from u, by all of their generations.
    let mut joins_next: Vec<Option<usize>> = vec![None; n];
    let mut out_degree = vec![0usize; n];
    let mut in_degree = vec![0usize; n];
    for &(from, to) in adjacency.keys() {
        out_degree[from] += 1;
        in_degree[to] += 1;
    }
    for (&(from, to), &count) in &adjacency {
        let (fu, fv) = (lattice.node(from).frequency, lattice.node(to).frequency);
        if out_degree[from] == 1 && in_degree[to] == 1 && count == fu && count == fv {
            joins_next[from] = Some(to);
        }
    }

    // Group id = the head of each run.
    let mut joined_from = vec![false; n];
    for v in joins_next.iter().flatten() {
        joined_from[*v] = true;
    }
    let mut group: Vec<ClusterKey> = (0..n).collect();
    for head in (0..n).filter(|&u| !joined_from[u]) {
        let mut cur = head;
        while let Some(next) = joins_next[cur] {
            group[next] = head;
            cur = next;
        }
    }

    let steps = lattice
        .traversals()
        .iter()
        .map(|t| {
            let mut out: Vec<(ClusterKey, usize, usize)> = Vec::with_capacity(t.steps.len());
            for step in &t.steps {
                let key = group[step.node];
                match out.last_mut() {
                    Some(last) if last.0 == key => last.2 = step.end,
                    _ => out.push((key, step.start, step.end)),
                }
            }
            out
        })
        .collect();
    TokenLattice::from_assignment(lattice.mode(), lattice.threshold(), lattice.generations_arc(), steps)
}
