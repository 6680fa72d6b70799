//! Minimum spanning trees over candidate graphs.
//!
//! All algorithms order edges by `(w, u, v)`; under that strict order the
//! minimum spanning tree is unique, so every algorithm returns the same edge
//! set even when weights repeat.

mod boruvka;
mod doc;
mod rooted;
mod soft_heap;
mod union_find;

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

pub use boruvka::{mst_boruvka_soft, mst_boruvka_soft_with_stats, BoruvkaStats, DEFAULT_EPSILON};
pub use doc::{TreeDocument, TREE_SCHEMA_VERSION};
pub use rooted::{root_tree, RootPolicy, RootedTree, NO_PARENT};
pub use soft_heap::{rank_threshold, Extracted, HeapId, OrdF64, SoftHeap, SoftHeapArena};
pub use union_find::UnionFind;

use crate::error::{GgError, Result};
use crate::graph::WeightedEdge;

/// Largest node count accepted by [`mst_bruteforce`].
pub const BRUTEFORCE_MAX_NODES: usize = 8;

/// A spanning tree: exactly `L - 1` edges, connected and acyclic.
///
/// Edges are kept in canonical `(w, u, v)` order and `total_weight` is summed
/// in that order, so equal edge sets always give bit-identical totals.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanningTree {
    nodes: usize,
    edges: Vec<WeightedEdge>,
    total_weight: f64,
}

impl SpanningTree {
    /// Validates that `edges` form a spanning tree on `nodes` nodes.
    pub fn from_edges(nodes: usize, mut edges: Vec<WeightedEdge>) -> Result<Self> {
        if nodes == 0 {
            return Err(GgError::Contract("a tree needs at least one node".into()));
        }
        if edges.len() != nodes - 1 {
            return Err(GgError::Contract(format!(
                "a spanning tree on {nodes} nodes has {} edges, expected {}",
                edges.len(),
                nodes - 1
            )));
        }
        let mut uf = UnionFind::new(nodes);
        for e in &mut edges {
            if e.u >= nodes || e.v >= nodes || e.u == e.v {
                return Err(GgError::Contract(format!("bad tree edge ({}, {})", e.u, e.v)));
            }
            *e = WeightedEdge::new(e.u, e.v, e.w);
            if !uf.union(e.u, e.v) {
                return Err(GgError::Contract(format!("edge ({}, {}) closes a cycle", e.u, e.v)));
            }
        }
        Ok(Self::from_accepted(nodes, edges))
    }

    fn from_accepted(nodes: usize, mut edges: Vec<WeightedEdge>) -> Self {
        edges.sort_by(WeightedEdge::cmp_key);
        let total_weight = edges.iter().map(|e| e.w).sum();
        Self { nodes, edges, total_weight }
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[WeightedEdge] {
        &self.edges
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    /// Edge endpoints sorted by `(u, v)`, handy for set comparisons.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        p.sort_unstable();
        p
    }
}

/// Spanning-tree algorithm selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MstAlgorithm {
    Kruskal,
    Prim,
    BoruvkaSoft,
}

impl MstAlgorithm {
    pub const ALL: [MstAlgorithm; 3] = [Self::Kruskal, Self::Prim, Self::BoruvkaSoft];

    pub fn name(self) -> &'static str {
        match self {
            Self::Kruskal => "kruskal",
            Self::Prim => "prim",
            Self::BoruvkaSoft => "boruvka_soft",
        }
    }

    pub fn run(self, edges: &[WeightedEdge], nodes: usize) -> Result<SpanningTree> {
        match self {
            Self::Kruskal => mst_kruskal(edges, nodes),
            Self::Prim => mst_prim(edges, nodes),
            Self::BoruvkaSoft => mst_boruvka_soft(edges, nodes, DEFAULT_EPSILON),
        }
    }
}

impl std::str::FromStr for MstAlgorithm {
    type Err = GgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kruskal" => Ok(Self::Kruskal),
            "prim" => Ok(Self::Prim),
            "boruvka_soft" | "boruvka-soft" | "boruvka" => Ok(Self::BoruvkaSoft),
            _ => Err(GgError::InvalidConfig(format!("unknown MST algorithm '{s}'"))),
        }
    }
}

fn check_edges(edges: &[WeightedEdge], nodes: usize) -> Result<()> {
    if nodes == 0 {
        return Err(GgError::Contract("graph needs at least one node".into()));
    }
    for e in edges {
        if e.u >= nodes || e.v >= nodes {
            return Err(GgError::Contract(format!("edge ({}, {}) out of range for L = {nodes}", e.u, e.v)));
        }
        if !e.w.is_finite() {
            return Err(GgError::InvalidInput(format!("edge ({}, {}) has weight {}", e.u, e.v, e.w)));
        }
    }
    Ok(())
}

/// Names two nodes in different components of `uf`.
pub(crate) fn disconnected(uf: &mut UnionFind) -> GgError {
    let r0 = uf.find(0);
    let b = (1..uf.len()).find(|&i| uf.find(i) != r0).unwrap_or(0);
    GgError::Disconnected { a: 0, b }
}

pub fn mst_kruskal(edges: &[WeightedEdge], nodes: usize) -> Result<SpanningTree> {
    check_edges(edges, nodes)?;
    let mut sorted = edges.to_vec();
    sorted.sort_by(WeightedEdge::cmp_key);
    let mut uf = UnionFind::new(nodes);
    let mut tree = Vec::with_capacity(nodes - 1);
    for e in sorted {
        if uf.union(e.u, e.v) {
            let e = WeightedEdge::new(e.u, e.v, e.w);
            tree.push(e);
            if tree.len() == nodes - 1 {
                break;
            }
        }
    }
    if tree.len() != nodes - 1 {
        return Err(disconnected(&mut uf));
    }
    Ok(SpanningTree::from_accepted(nodes, tree))
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEdge(WeightedEdge);

impl Eq for HeapEdge {}

impl PartialOrd for HeapEdge {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEdge {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp_key(&other.0)
    }
}

/// Compressed adjacency: `(neighbour, edge index)` per node.
pub(crate) fn adjacency(edges: &[WeightedEdge], nodes: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut start = vec![0usize; nodes + 1];
    for e in edges {
        start[e.u + 1] += 1;
        start[e.v + 1] += 1;
    }
    for i in 0..nodes {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![(0, 0); start[nodes]];
    for (idx, e) in edges.iter().enumerate() {
        adj[fill[e.u]] = (e.v, idx);
        fill[e.u] += 1;
        adj[fill[e.v]] = (e.u, idx);
        fill[e.v] += 1;
    }
    (start, adj)
}

/// Lazy Prim from node 0 with an exact binary heap.
pub fn mst_prim(edges: &[WeightedEdge], nodes: usize) -> Result<SpanningTree> {
    check_edges(edges, nodes)?;
    let (start, adj) = adjacency(edges, nodes);
    let mut in_tree = vec![false; nodes];
    let mut heap = BinaryHeap::new();
    let mut tree = Vec::with_capacity(nodes - 1);
    in_tree[0] = true;
    for &(_, idx) in &adj[start[0]..start[1]] {
        heap.push(Reverse(HeapEdge(WeightedEdge::new(edges[idx].u, edges[idx].v, edges[idx].w))));
    }
    while let Some(Reverse(HeapEdge(e))) = heap.pop() {
        let next = match (in_tree[e.u], in_tree[e.v]) {
            (true, false) => e.v,
            (false, true) => e.u,
            _ => continue,
        };
        in_tree[next] = true;
        tree.push(e);
        if tree.len() == nodes - 1 {
            break;
        }
        for &(nb, idx) in &adj[start[next]..start[next + 1]] {
            if !in_tree[nb] {
                let f = &edges[idx];
                heap.push(Reverse(HeapEdge(WeightedEdge::new(f.u, f.v, f.w))));
            }
        }
    }
    if tree.len() != nodes - 1 {
        let b = in_tree.iter().position(|&t| !t).unwrap_or(0);
        return Err(GgError::Disconnected { a: 0, b });
    }
    Ok(SpanningTree::from_accepted(nodes, tree))
}

/// Exhaustive search over all spanning trees; the reference oracle for
/// `L <= 8`. Ties on total weight go to the lexicographically smallest
/// sorted edge sequence, which is the tree the greedy algorithms return.
pub fn mst_bruteforce(edges: &[WeightedEdge], nodes: usize) -> Result<SpanningTree> {
    if nodes > BRUTEFORCE_MAX_NODES {
        return Err(GgError::OracleSize { nodes, limit: BRUTEFORCE_MAX_NODES });
    }
    check_edges(edges, nodes)?;
    let mut sorted: Vec<WeightedEdge> =
        edges.iter().filter(|e| e.u != e.v).map(|e| WeightedEdge::new(e.u, e.v, e.w)).collect();
    sorted.sort_by(WeightedEdge::cmp_key);

    struct Search<'a> {
        edges: &'a [WeightedEdge],
        need: usize,
        chosen: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }

    fn find(parent: &[usize; BRUTEFORCE_MAX_NODES], mut x: usize) -> usize {
        while parent[x] != x {
            x = parent[x];
        }
        x
    }

    impl Search<'_> {
        fn go(&mut self, next: usize, parent: [usize; BRUTEFORCE_MAX_NODES]) {
            if self.chosen.len() == self.need {
                // Sum in canonical order, exactly as SpanningTree does.
                let total: f64 = self.chosen.iter().map(|&i| self.edges[i].w).sum();
                let better = match &self.best {
                    None => true,
                    Some((bt, bset)) => total < *bt || (total == *bt && self.lex_less(&self.chosen, bset)),
                };
                if better {
                    self.best = Some((total, self.chosen.clone()));
                }
                return;
            }
            if self.edges.len() - next < self.need - self.chosen.len() {
                return;
            }
            let e = self.edges[next];
            let (ru, rv) = (find(&parent, e.u), find(&parent, e.v));
            if ru != rv {
                let mut p = parent;
                p[ru] = rv;
                self.chosen.push(next);
                self.go(next + 1, p);
                self.chosen.pop();
            }
            self.go(next + 1, parent);
        }

        fn lex_less(&self, a: &[usize], b: &[usize]) -> bool {
            for (&x, &y) in a.iter().zip(b) {
                match self.edges[x].cmp_key(&self.edges[y]) {
                    Ordering::Less => return true,
                    Ordering::Greater => return false,
                    Ordering::Equal => {}
                }
            }
            false
        }
    }

    let mut parent = [0usize; BRUTEFORCE_MAX_NODES];
    for (i, p) in parent.iter_mut().enumerate() {
        *p = i;
    }
    let mut search = Search { edges: &sorted, need: nodes - 1, chosen: Vec::new(), best: None };
    search.go(0, parent);
    match search.best {
        Some((_, idx)) => Ok(SpanningTree::from_accepted(nodes, idx.into_iter().map(|i| sorted[i]).collect())),
        None => {
            let mut uf = UnionFind::new(nodes);
            for e in &sorted {
                uf.union(e.u, e.v);
            }
            Err(disconnected(&mut uf))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(u: usize, v: usize, w: f64) -> WeightedEdge {
        WeightedEdge::new(u, v, w)
    }

    fn triangle() -> Vec<WeightedEdge> {
        vec![e(0, 1, 1.0), e(1, 2, 2.0), e(0, 2, 3.0)]
    }

    #[test]
    fn triangle_all_algorithms() {
        for algo in MstAlgorithm::ALL {
            let t = algo.run(&triangle(), 3).unwrap();
            assert_eq!(t.edge_pairs(), vec![(0, 1), (1, 2)], "{algo:?}");
            assert_eq!(t.total_weight(), 3.0);
        }
        let b = mst_bruteforce(&triangle(), 3).unwrap();
        assert_eq!(b.total_weight(), 3.0);
    }

    #[test]
    fn path_graph_is_its_own_tree() {
        let path: Vec<_> = (0..6).map(|i| e(i, i + 1, 1.0 + i as f64 * 0.1)).collect();
        let t = mst_kruskal(&path, 7).unwrap();
        assert_eq!(t.edge_pairs(), (0..6).map(|i| (i, i + 1)).collect::<Vec<_>>());
    }

    #[test]
    fn star_is_unique_tree() {
        let star: Vec<_> = (1..6).map(|i| e(0, i, 5.0 - i as f64)).collect();
        let t = mst_prim(&star, 6).unwrap();
        assert_eq!(t.edge_pairs(), (1..6).map(|i| (0, i)).collect::<Vec<_>>());
    }

    #[test]
    fn four_cycle_drops_heaviest() {
        let cyc = vec![e(0, 1, 1.0), e(1, 2, 2.0), e(2, 3, 3.0), e(0, 3, 4.0)];
        let t = mst_bruteforce(&cyc, 4).unwrap();
        assert_eq!(t.total_weight(), 6.0);
        assert!(!t.edge_pairs().contains(&(0, 3)));
    }

    #[test]
    fn disconnected_is_reported() {
        let g = vec![e(0, 1, 1.0), e(2, 3, 1.0)];
        for algo in MstAlgorithm::ALL {
            match algo.run(&g, 4) {
                Err(GgError::Disconnected { a, b }) => {
                    assert_eq!(a, 0);
                    assert!(b == 2 || b == 3);
                }
                other => panic!("{algo:?}: {other:?}"),
            }
        }
        assert!(matches!(mst_bruteforce(&g, 4), Err(GgError::Disconnected { .. })));
    }

    #[test]
    fn bruteforce_size_limit() {
        assert!(matches!(mst_bruteforce(&[], 9), Err(GgError::OracleSize { nodes: 9, limit: 8 })));
    }

    #[test]
    fn ties_resolve_identically() {
        // every weight equal: canonical order decides
        let mut g = Vec::new();
        for u in 0..5 {
            for v in u + 1..5 {
                g.push(e(u, v, 1.0));
            }
        }
        let k = mst_kruskal(&g, 5).unwrap();
        assert_eq!(k.edge_pairs(), vec![(0, 1), (0, 2), (0, 3), (0, 4)]);
        assert_eq!(mst_prim(&g, 5).unwrap().edges(), k.edges());
        assert_eq!(mst_boruvka_soft(&g, 5, DEFAULT_EPSILON).unwrap().edges(), k.edges());
        assert_eq!(mst_bruteforce(&g, 5).unwrap().edges(), k.edges());
    }

    #[test]
    fn single_node_tree() {
        for algo in MstAlgorithm::ALL {
            let t = algo.run(&[], 1).unwrap();
            assert!(t.edges().is_empty());
            assert_eq!(t.total_weight(), 0.0);
        }
    }

    #[test]
    fn from_edges_validates() {
        assert!(SpanningTree::from_edges(3, vec![e(0, 1, 1.0)]).is_err());
        assert!(SpanningTree::from_edges(3, vec![e(0, 1, 1.0), e(1, 0, 2.0)]).is_err());
        assert!(SpanningTree::from_edges(3, vec![e(0, 1, 1.0), e(1, 5, 2.0)]).is_err());
        let t = SpanningTree::from_edges(3, vec![e(2, 1, 2.0), e(0, 1, 1.0)]).unwrap();
        assert_eq!(t.edges()[0], e(0, 1, 1.0));
    }
}
