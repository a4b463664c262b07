//! Greedy similarity merging with cycle avoidance.
//!
//! Token occurrences are grouped with a disjoint-set forest. The cluster
//! graph keeps a topological numbering that is repaired locally after each
//! accepted merge (the Pearce–Kelly scheme): to merge clusters `u` and `v`
//! with `ord(u) < ord(v)`, a forward search from `u` restricted to
//! `ord < ord(v)` decides whether `v` is reachable (merge rejected), and the
//! nodes found by that search plus a backward search from `v` are
//! renumbered so the merged cluster sits between its predecessors and
//! successors. Searches therefore only touch the window between the two
//! clusters.

use super::{ClusterKey, TokenLattice};
use crate::similarity::ScoreTable;

#[derive(Clone, Debug)]
struct DisjointSet {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    /// Returns the surviving root.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return a;
        }
        if self.rank[a as usize] < self.rank[b as usize] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b as usize] = a;
        if self.rank[a as usize] == self.rank[b as usize] {
            self.rank[a as usize] += 1;
        }
        a
    }
}

struct ClusterGraph {
    sets: DisjointSet,
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
    /// Generation ordinals present in each root cluster, sorted.
    gens: Vec<Vec<u32>>,
    ord: Vec<usize>,
    stamp: Vec<u32>,
    epoch: u32,
}

impl ClusterGraph {
    fn fresh_epoch(&mut self) -> u32 {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
        self.epoch
    }

    fn share_generation(&self, a: u32, b: u32) -> bool {
        let (x, y) = (&self.gens[a as usize], &self.gens[b as usize]);
        let (mut i, mut j) = (0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Clusters reachable from `u` with `ord < ord(v)`, or `None` when `v`
    /// itself is reachable.
    fn forward(&mut self, u: u32, v: u32) -> Option<Vec<u32>> {
        let limit = self.ord[v as usize];
        let epoch = self.fresh_epoch();
        let mut stack = vec![u];
        let mut found = Vec::new();
        self.stamp[u as usize] = epoch;
        while let Some(x) = stack.pop() {
            for k in 0..self.succ[x as usize].len() {
                let s = self.sets.find(self.succ[x as usize][k]);
                if s == v {
                    return None;
                }
                if self.ord[s as usize] < limit && self.stamp[s as usize] != epoch {
                    self.stamp[s as usize] = epoch;
                    found.push(s);
                    stack.push(s);
                }
            }
        }
        Some(found)
    }

    /// Clusters with `ord > ord(u)` from which `v` is reachable.
    fn backward(&mut self, v: u32, u: u32) -> Vec<u32> {
        let limit = self.ord[u as usize];
        let epoch = self.fresh_epoch();
        let mut stack = vec![v];
        let mut found = Vec::new();
        self.stamp[v as usize] = epoch;
        while let Some(x) = stack.pop() {
            for k in 0..self.pred[x as usize].len() {
                let p = self.sets.find(self.pred[x as usize][k]);
                if self.ord[p as usize] > limit && self.stamp[p as usize] != epoch {
                    self.stamp[p as usize] = epoch;
                    found.push(p);
                    stack.push(p);
                }
            }
        }
        found
    }

    fn resolved(&mut self, list: Vec<u32>, exclude: u32) -> Vec<u32> {
        let mut out: Vec<u32> = list
            .into_iter()
            .map(|x| self.sets.find(x))
            .filter(|&x| x != exclude)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Merges `a` and `b` unless that would create a cycle.
    fn try_merge(&mut self, a: u32, b: u32) -> bool {
        let (ra, rb) = (self.sets.find(a), self.sets.find(b));
        if ra == rb || self.share_generation(ra, rb) {
            return false;
        }
        let (u, v) = if self.ord[ra as usize] < self.ord[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        let Some(mut ahead) = self.forward(u, v) else {
            return false;
        };
        let mut behind = self.backward(v, u);
        ahead.sort_unstable_by_key(|&x| self.ord[x as usize]);
        behind.sort_unstable_by_key(|&x| self.ord[x as usize]);

        let mut pool: Vec<usize> = ahead
            .iter()
            .chain(behind.iter())
            .chain([u, v].iter())
            .map(|&x| self.ord[x as usize])
            .collect();
        pool.sort_unstable();
        for (slot, &x) in pool.iter().zip(&behind) {
            self.ord[x as usize] = *slot;
        }
        let merged_slot = pool[behind.len()];
        for (slot, &x) in pool[behind.len() + 1..].iter().zip(&ahead) {
            self.ord[x as usize] = *slot;
        }

        let root = self.sets.union(u, v);
        let other = if root == u { v } else { u };
        self.ord[root as usize] = merged_slot;

        let mut succ = std::mem::take(&mut self.succ[u as usize]);
        succ.append(&mut std::mem::take(&mut self.succ[v as usize]));
        self.succ[root as usize] = self.resolved(succ, root);
        let mut pred = std::mem::take(&mut self.pred[u as usize]);
        pred.append(&mut std::mem::take(&mut self.pred[v as usize]));
        self.pred[root as usize] = self.resolved(pred, root);

        let moved = std::mem::take(&mut self.gens[other as usize]);
        let kept = std::mem::take(&mut self.gens[root as usize]);
        let mut joined = Vec::with_capacity(kept.len() + moved.len());
        let (mut i, mut j) = (0, 0);
        while i < kept.len() || j < moved.len() {
            if j == moved.len() || (i < kept.len() && kept[i] < moved[j]) {
                joined.push(kept[i]);
                i += 1;
            } else {
                joined.push(moved[j]);
                j += 1;
            }
        }
        self.gens[root as usize] = joined;
        true
    }
}

/// Greedily merges token clusters in descending score order, skipping any
/// merge that would make node adjacency cyclic.
///
/// Works on token granularity: nodes of the input lattice (which may be
/// merged already, or collapsed) are expanded back into per-token clusters
/// first, and the result is uncollapsed.
pub fn merge_similar(lattice: &TokenLattice, threshold: f64, scores: &ScoreTable) -> TokenLattice {
    let generations = lattice.generations_arc();
    let lengths: Vec<usize> = generations.iter().map(|g| g.sequence.len()).collect();
    let mut offsets = Vec::with_capacity(lengths.len());
    let mut total = 0usize;
    for len in &lengths {
        offsets.push(total);
        total += len;
    }
    let gen_index: std::collections::HashMap<&str, usize> = generations
        .iter()
        .enumerate()
        .map(|(i, g)| (g.id.as_str(), i))
        .collect();

    let mut sets = DisjointSet::new(total);
    for node in lattice.nodes() {
        let Some(first) = node.members.first() else {
            continue;
        };
        let anchor = offsets[gen_index[first.generation.as_str()]] + first.start;
        for m in &node.members[1..] {
            let base = offsets[gen_index[m.generation.as_str()]] + m.start;
            for k in 0..m.len().min(first.len()) {
                sets.union((anchor + k) as u32, (base + k) as u32);
            }
        }
    }

    let mut succ = vec![Vec::new(); total];
    let mut pred = vec![Vec::new(); total];
    let mut gens = vec![Vec::new(); total];
    let mut indegree = vec![0usize; total];
    for (g, &len) in lengths.iter().enumerate() {
        for i in 0..len {
            let t = (offsets[g] + i) as u32;
            let r = sets.find(t);
            gens[r as usize].push(g as u32);
            if i + 1 < len {
                let s = sets.find(t + 1);
                succ[r as usize].push(s);
                pred[s as usize].push(r);
            }
        }
    }
    for r in 0..total {
        succ[r].sort_unstable();
        succ[r].dedup();
        pred[r].sort_unstable();
        pred[r].dedup();
        gens[r].sort_unstable();
        gens[r].dedup();
        for &s in &succ[r] {
            indegree[s as usize] += 1;
        }
    }

    let mut ord = vec![0usize; total];
    let mut queue: std::collections::VecDeque<u32> = (0..total as u32)
        .filter(|&t| sets.parent[t as usize] == t && indegree[t as usize] == 0)
        .collect();
    let mut next = 0;
    while let Some(u) = queue.pop_front() {
        ord[u as usize] = next;
        next += 1;
        for k in 0..succ[u as usize].len() {
            let s = succ[u as usize][k] as usize;
            indegree[s] -= 1;
            if indegree[s] == 0 {
                queue.push_back(s as u32);
            }
        }
    }

    let mut graph = ClusterGraph {
        sets,
        succ,
        pred,
        gens,
        ord,
        stamp: vec![0; total],
        epoch: 0,
    };

    let consistent = scores.matches(&lengths);
    debug_assert!(consistent, "score table built for a different corpus");
    if consistent {
        for c in scores.candidates_at(threshold) {
            let a = offsets[c.a.generation as usize] + c.a.index as usize;
            let b = offsets[c.b.generation as usize] + c.b.index as usize;
            graph.try_merge(a as u32, b as u32);
        }
    }

    let steps: Vec<Vec<(ClusterKey, usize, usize)>> = lengths
        .iter()
        .enumerate()
        .map(|(g, &len)| {
            (0..len)
                .map(|i| (graph.sets.find((offsets[g] + i) as u32) as ClusterKey, i, i + 1))
                .collect()
        })
        .collect();
    TokenLattice::from_assignment(lattice.mode(), Some(threshold), generations, steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::FallbackEmbedder;
    use crate::lattice::GenerationTokens;
    use crate::segment::SegmentationMode;
    use crate::similarity::{Candidate, PreparedTokens, TokenPos};
    use crate::stopwords::StopwordList;

    fn gens(texts: &[&str]) -> Vec<GenerationTokens> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| GenerationTokens::new(format!("g{i}"), "p", t, SegmentationMode::Space))
            .collect()
    }

    fn merged(texts: &[&str], threshold: f64) -> TokenLattice {
        let g = gens(texts);
        let seqs: Vec<_> = g.iter().map(|g| g.sequence.clone()).collect();
        let prepared =
            PreparedTokens::prepare(&seqs, &FallbackEmbedder::default(), StopwordList::english(), 2).unwrap();
        let table = ScoreTable::compute(&prepared, 0.2);
        let chains = TokenLattice::build_chains(SegmentationMode::Space, g);
        merge_similar(&chains, threshold, &table)
    }

    fn labels(l: &TokenLattice) -> Vec<(&str, usize)> {
        l.nodes().iter().map(|n| (n.label.as_str(), n.frequency)).collect()
    }

    #[test]
    fn shared_prefix_merges_and_branches() {
        let l = merged(&["a b c", "a b d"], 0.5);
        assert_eq!(labels(&l), [("a", 2), ("b", 2), ("c", 1), ("d", 1)]);
        assert!(l.validate().is_ok());
        let b = 1;
        let out: Vec<_> = l.adjacency().keys().filter(|(f, _)| *f == b).map(|e| e.1).collect();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn swapped_order_rejects_cyclic_merge() {
        let l = merged(&["x y", "y x"], 0.5);
        assert_eq!(l.nodes().len(), 3);
        let x = l.nodes().iter().find(|n| n.label == "x").unwrap();
        assert_eq!(x.frequency, 2);
        assert!(l.validate().is_ok());
    }

    #[test]
    fn threshold_above_one_merges_nothing() {
        let l = merged(&["a b c", "a b c"], 1.01);
        assert_eq!(l.nodes().len(), 6);
        assert_eq!(l.threshold(), Some(1.01));
    }

    #[test]
    fn identical_generations_collapse_to_one_chain() {
        let texts = ["the old man walked to the sea"; 6];
        let l = merged(&texts, 0.5);
        assert_eq!(l.nodes().len(), 7);
        assert!(l.nodes().iter().all(|n| n.frequency == 6));
        assert!(l.validate().is_ok());
    }

    fn table_from(cands: &[(usize, usize, usize, usize, f64)], lengths: &[usize]) -> ScoreTable {
        // Build a table through the public constructor using a scoring
        // closure that looks up the given pairs.
        let texts: Vec<String> = lengths
            .iter()
            .map(|&n| (0..n).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" "))
            .collect();
        let seqs: Vec<_> = texts
            .iter()
            .map(|t| crate::segment::segment(t, SegmentationMode::Space))
            .collect();
        let prepared =
            PreparedTokens::prepare(&seqs, &FallbackEmbedder::default(), StopwordList::english(), 0).unwrap();
        let lookup: Vec<Candidate> = cands
            .iter()
            .map(|&(ga, ia, gb, ib, s)| Candidate {
                a: TokenPos::new(ga, ia),
                b: TokenPos::new(gb, ib),
                score: s,
            })
            .collect();
        ScoreTable::compute_with(&prepared, 0.5, move |a, b| {
            lookup
                .iter()
                .find(|c| c.a == a && c.b == b)
                .map_or(f64::NEG_INFINITY, |c| c.score)
        })
    }

    #[test]
    fn transitive_cycle_through_earlier_merges_is_rejected() {
        // g0: A B C ; g1: C' X A'. Merging A~A' then C~C' would create
        // A -> B -> C = C' -> X -> A' = A.
        let table = table_from(&[(0, 0, 1, 2, 0.9), (0, 2, 1, 0, 0.8)], &[3, 3]);
        let g = gens(&["t0 t1 t2", "t0 t1 t2"]);
        let chains = TokenLattice::build_chains(SegmentationMode::Space, g);
        let l = merge_similar(&chains, 0.5, &table);
        assert_eq!(l.nodes().len(), 5);
        assert!(l.validate().is_ok());
    }

    #[test]
    fn reordering_keeps_later_checks_sound() {
        // Merges that force renumbering, followed by one that must be caught
        // through the renumbered region.
        let table = table_from(
            &[
                (0, 3, 1, 0, 0.99), // g0 tail with g1 head: g1 now after g0
                (1, 3, 2, 0, 0.98), // g1 tail with g2 head
                (0, 0, 2, 3, 0.97), // g0 head with g2 tail: would close the loop
                (0, 1, 2, 1, 0.60),
            ],
            &[4, 4, 4],
        );
        let g = gens(&["t0 t1 t2 t3", "t0 t1 t2 t3", "t0 t1 t2 t3"]);
        let chains = TokenLattice::build_chains(SegmentationMode::Space, g);
        let l = merge_similar(&chains, 0.5, &table);
        assert!(l.validate().is_ok());
        // 12 tokens, two accepted merges; the loop and the backward merge
        // (g2 t1 sits after g0 t1's successors) are both rejected.
        assert_eq!(l.nodes().len(), 10);
    }

    #[test]
    fn remerging_a_merged_lattice_is_stable() {
        let g = gens(&["a b c", "a b d", "a e d"]);
        let seqs: Vec<_> = g.iter().map(|g| g.sequence.clone()).collect();
        let prepared =
            PreparedTokens::prepare(&seqs, &FallbackEmbedder::default(), StopwordList::english(), 2).unwrap();
        let table = ScoreTable::compute(&prepared, 0.2);
        let chains = TokenLattice::build_chains(SegmentationMode::Space, g);
        let once = merge_similar(&chains, 0.5, &table);
        let twice = merge_similar(&once, 0.5, &table);
        assert_eq!(once, twice);
        let collapsed = crate::lattice::collapse_chains(&once);
        let again = merge_similar(&collapsed, 0.5, &table);
        assert_eq!(again, once);
    }
}
