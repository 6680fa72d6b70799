use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::SpanningTree;
use crate::error::{contract, GgError, Result};

/// Parent of the root.
pub const NO_PARENT: usize = usize::MAX;

/// How the layer picks a root when none is given.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RootPolicy {
    #[default]
    NodeZero,
    /// Highest-degree node, smallest index on ties.
    MaxDegree,
}

impl RootPolicy {
    pub fn pick(self, tree: &SpanningTree) -> usize {
        match self {
            Self::NodeZero => 0,
            Self::MaxDegree => {
                let mut deg = vec![0usize; tree.nodes()];
                for e in tree.edges() {
                    deg[e.u] += 1;
                    deg[e.v] += 1;
                }
                let max = deg.iter().copied().max().unwrap_or(0);
                deg.iter().position(|&d| d == max).unwrap_or(0)
            }
        }
    }
}

impl std::str::FromStr for RootPolicy {
    type Err = GgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node_zero" | "node-zero" | "zero" => Ok(Self::NodeZero),
            "max_degree" | "max-degree" => Ok(Self::MaxDegree),
            _ => Err(GgError::InvalidConfig(format!("unknown root policy '{s}'"))),
        }
    }
}

/// A tree with a chosen root and a breadth-first traversal order.
///
/// `order[0]` is the root and every parent precedes its children. Children
/// are sorted by index, which fixes the order for a given tree and root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    root: usize,
    parent: Vec<usize>,
    children: Vec<Vec<usize>>,
    order: Vec<usize>,
    depth: Vec<usize>,
    // position of each node in `order`, and the parent's position
    pos: Vec<usize>,
    parent_pos: Vec<usize>,
    // children of position k sit at positions kids[k]..kids[k + 1]
    kids: Vec<usize>,
}

impl RootedTree {
    /// Roots an undirected tree given as endpoint pairs.
    pub fn from_pairs(nodes: usize, pairs: &[(usize, usize)], root: usize) -> Result<Self> {
        contract!(nodes >= 1, "a tree needs at least one node");
        contract!(root < nodes, "root {root} out of range for L = {nodes}");
        contract!(pairs.len() == nodes - 1, "{} edges given for a tree on {nodes} nodes", pairs.len());
        let mut adj = vec![Vec::new(); nodes];
        for &(u, v) in pairs {
            contract!(u < nodes && v < nodes && u != v, "bad tree edge ({u}, {v})");
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut parent = vec![NO_PARENT; nodes];
        let mut children = vec![Vec::new(); nodes];
        let mut depth = vec![0; nodes];
        let mut seen = vec![false; nodes];
        let mut order = Vec::with_capacity(nodes);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(p) = queue.pop_front() {
            order.push(p);
            let mut kids: Vec<usize> = adj[p].iter().copied().filter(|&c| !seen[c]).collect();
            kids.sort_unstable();
            kids.dedup();
            for &c in &kids {
                seen[c] = true;
                parent[c] = p;
                depth[c] = depth[p] + 1;
                queue.push_back(c);
            }
            children[p] = kids;
        }
        contract!(order.len() == nodes, "edges do not form a tree (cycle or disconnected)");
        let mut pos = vec![0; nodes];
        for (k, &v) in order.iter().enumerate() {
            pos[v] = k;
        }
        let parent_pos =
            order.iter().map(|&v| if parent[v] == NO_PARENT { NO_PARENT } else { pos[parent[v]] }).collect();
        let mut kids = Vec::with_capacity(nodes + 1);
        kids.push(1);
        for &v in &order {
            kids.push(kids.last().copied().unwrap_or(1) + children[v].len());
        }
        Ok(Self { root, parent, children, order, depth, pos, parent_pos, kids })
    }

    /// Path `0 - 1 - ... - (L-1)`.
    pub fn chain(nodes: usize, root: usize) -> Result<Self> {
        let pairs: Vec<_> = (1..nodes).map(|v| (v - 1, v)).collect();
        Self::from_pairs(nodes, &pairs, root)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self) -> &[usize] {
        &self.parent
    }

    pub fn children(&self, v: usize) -> &[usize] {
        &self.children[v]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn depth(&self) -> &[usize] {
        &self.depth
    }

    pub fn height(&self) -> usize {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    /// Index of node `v` in [`order`](Self::order).
    pub fn position(&self, v: usize) -> usize {
        self.pos[v]
    }

    /// For each position in the order, the position of its parent.
    pub fn parent_positions(&self) -> &[usize] {
        &self.parent_pos
    }

    /// Children of the node at position `k` occupy positions
    /// `child_offsets()[k]..child_offsets()[k + 1]`.
    pub fn child_offsets(&self) -> &[usize] {
        &self.kids
    }

    /// Undirected edges as sorted `(u, v)` pairs with `u < v`.
    pub fn edge_pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = (0..self.len())
            .filter(|&v| self.parent[v] != NO_PARENT)
            .map(|v| (v.min(self.parent[v]), v.max(self.parent[v])))
            .collect();
        p.sort_unstable();
        p
    }

    /// Nodes on the unique path from `j` to `i`, both endpoints included.
    pub fn path(&self, j: usize, i: usize) -> Result<Vec<usize>> {
        let n = self.len();
        contract!(j < n && i < n, "path ({j}, {i}) out of range for L = {n}");
        let (mut a, mut b) = (j, i);
        let mut head = vec![];
        let mut tail = vec![];
        while self.depth[a] > self.depth[b] {
            head.push(a);
            a = self.parent[a];
        }
        while self.depth[b] > self.depth[a] {
            tail.push(b);
            b = self.parent[b];
        }
        while a != b {
            head.push(a);
            tail.push(b);
            a = self.parent[a];
            b = self.parent[b];
        }
        head.push(a);
        head.extend(tail.into_iter().rev());
        Ok(head)
    }
}

pub fn root_tree(tree: &SpanningTree, root: usize) -> Result<RootedTree> {
    let pairs: Vec<_> = tree.edges().iter().map(|e| (e.u, e.v)).collect();
    RootedTree::from_pairs(tree.nodes(), &pairs, root)
}
