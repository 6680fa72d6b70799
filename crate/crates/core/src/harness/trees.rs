use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mst::RootedTree;

/// Decodes a Prüfer sequence of length `L - 2` into tree edges. Every
/// labeled tree on `L` nodes has exactly one sequence, so a uniform
/// sequence gives a uniform tree.
pub fn prufer_decode(seq: &[usize], nodes: usize) -> Vec<(usize, usize)> {
    debug_assert_eq!(seq.len() + 2, nodes.max(2));
    if nodes < 2 {
        return Vec::new();
    }
    let mut degree = vec![1usize; nodes];
    for &s in seq {
        degree[s] += 1;
    }
    let mut leaves: BinaryHeap<Reverse<usize>> = (0..nodes).filter(|&v| degree[v] == 1).map(Reverse).collect();
    let mut edges = Vec::with_capacity(nodes - 1);
    for &s in seq {
        let Reverse(leaf) = leaves.pop().expect("a tree always has a leaf");
        edges.push((leaf.min(s), leaf.max(s)));
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.push(Reverse(s));
        }
    }
    let Reverse(a) = leaves.pop().expect("two nodes remain");
    let Reverse(b) = leaves.pop().expect("two nodes remain");
    edges.push((a.min(b), a.max(b)));
    edges
}

/// Uniform random labeled tree.
pub fn random_tree_pairs(nodes: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    if nodes < 2 {
        return Vec::new();
    }
    let seq: Vec<usize> = (0..nodes - 2).map(|_| rng.random_range(0..nodes)).collect();
    prufer_decode(&seq, nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeShape {
    Chain,
    Star,
    Random,
}

impl TreeShape {
    pub const ALL: [TreeShape; 3] = [Self::Chain, Self::Star, Self::Random];

    /// Node labels are shuffled for chains and stars too, so no shape
    /// lines up with the label order.
    pub fn pairs(self, nodes: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
        let mut label: Vec<usize> = (0..nodes).collect();
        rand::seq::SliceRandom::shuffle(label.as_mut_slice(), rng);
        match self {
            Self::Chain => (1..nodes).map(|v| (label[v - 1], label[v])).collect(),
            Self::Star => (1..nodes).map(|v| (label[0], label[v])).collect(),
            Self::Random => random_tree_pairs(nodes, rng),
        }
    }

    /// A tree of this shape rooted at a uniformly chosen node.
    pub fn rooted(self, nodes: usize, rng: &mut impl Rng) -> Result<RootedTree> {
        let pairs = self.pairs(nodes, rng);
        let root = rng.random_range(0..nodes);
        RootedTree::from_pairs(nodes, &pairs, root)
    }
}
