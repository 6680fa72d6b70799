use std::collections::VecDeque;
use std::time::{Duration, Instant};

use ggssm::graph::WeightedEdge;
use ggssm::harness::{random_tree_pairs, TreeShape};
use ggssm::mst::{mst_boruvka_soft, mst_bruteforce, mst_kruskal, MstAlgorithm, RootedTree, UnionFind};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn complete_graph(l: usize, r: &mut impl Rng) -> Vec<WeightedEdge> {
    let mut edges = Vec::new();
    for u in 0..l {
        for v in u + 1..l {
            edges.push(WeightedEdge::new(u, v, r.random_range(0.0..1.0)));
        }
    }
    edges
}

fn random_connected(l: usize, extra: usize, r: &mut impl Rng) -> Vec<WeightedEdge> {
    let mut edges: Vec<_> =
        random_tree_pairs(l, r).into_iter().map(|(u, v)| WeightedEdge::new(u, v, r.random_range(0.0..1.0))).collect();
    for _ in 0..extra {
        let u = r.random_range(0..l);
        let v = r.random_range(0..l);
        if u != v {
            edges.push(WeightedEdge::new(u, v, r.random_range(0.0..1.0)));
        }
    }
    edges
}

fn sorted_pairs(edges: &[WeightedEdge]) -> Vec<(usize, usize)> {
    let mut p: Vec<_> = edges.iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
    p.sort_unstable();
    p
}

/// Every 3-edge subset of K4 that is acyclic, found by direct enumeration.
fn k4_spanning_trees(edges: &[WeightedEdge]) -> Vec<Vec<usize>> {
    let mut trees = Vec::new();
    for mask in 0u32..(1 << edges.len()) {
        if mask.count_ones() != 3 {
            continue;
        }
        let mut comp = [0usize, 1, 2, 3];
        let mut acyclic = true;
        for (i, e) in edges.iter().enumerate() {
            if mask & (1 << i) != 0 {
                let (a, b) = (comp[e.u], comp[e.v]);
                if a == b {
                    acyclic = false;
                    break;
                }
                comp.iter_mut().filter(|c| **c == b).for_each(|c| *c = a);
            }
        }
        if acyclic {
            trees.push((0..edges.len()).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    trees
}

#[test]
fn k4_matches_enumeration_of_all_sixteen_trees() {
    let mut r = rng(1);
    for _ in 0..20 {
        let edges = complete_graph(4, &mut r);
        let trees = k4_spanning_trees(&edges);
        assert_eq!(trees.len(), 16);
        let best = trees
            .iter()
            .min_by(|a, b| {
                let wa: f64 = a.iter().map(|&i| edges[i].w).sum();
                let wb: f64 = b.iter().map(|&i| edges[i].w).sum();
                wa.total_cmp(&wb)
            })
            .unwrap();
        let want = sorted_pairs(&best.iter().map(|&i| edges[i]).collect::<Vec<_>>());
        for algo in MstAlgorithm::ALL {
            assert_eq!(sorted_pairs(algo.run(&edges, 4).unwrap().edges()), want, "{}", algo.name());
        }
        assert_eq!(sorted_pairs(mst_bruteforce(&edges, 4).unwrap().edges()), want);
    }
}

#[test]
fn small_graphs_agree_with_kruskal() {
    let mut r = rng(2);
    for _ in 0..200 {
        let l = r.random_range(1..=8);
        let edges = random_connected(l, r.random_range(0..20), &mut r);
        let k = mst_kruskal(&edges, l).unwrap();
        for algo in [MstAlgorithm::Prim, MstAlgorithm::BoruvkaSoft] {
            assert_eq!(algo.run(&edges, l).unwrap().total_weight(), k.total_weight());
        }
    }
}

#[test]
fn boruvka_matches_kruskal_up_to_64_nodes() {
    let mut r = rng(3);
    for _ in 0..500 {
        let l = r.random_range(1..=64);
        let edges = random_connected(l, r.random_range(0..4 * l), &mut r);
        let b = mst_boruvka_soft(&edges, l, 0.125).unwrap();
        assert_eq!(b.edges(), mst_kruskal(&edges, l).unwrap().edges());
    }
}

#[test]
fn k5_bruteforce_agrees_with_kruskal() {
    let mut r = rng(4);
    for _ in 0..50 {
        let edges = complete_graph(5, &mut r);
        assert_eq!(mst_bruteforce(&edges, 5).unwrap().edges(), mst_kruskal(&edges, 5).unwrap().edges());
    }
}

fn bfs_path(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut prev = vec![usize::MAX; adj.len()];
    prev[from] = from;
    let mut q = VecDeque::from([from]);
    while let Some(x) = q.pop_front() {
        for &y in &adj[x] {
            if prev[y] == usize::MAX {
                prev[y] = x;
                q.push_back(y);
            }
        }
    }
    let mut path = vec![to];
    while *path.last().unwrap() != from {
        path.push(prev[*path.last().unwrap()]);
    }
    path.reverse();
    path
}

#[test]
fn tree_paths_match_breadth_first_search() {
    let mut r = rng(5);
    let pairs = random_tree_pairs(64, &mut r);
    let tree = RootedTree::from_pairs(64, &pairs, r.random_range(0..64)).unwrap();
    let mut adj = vec![Vec::new(); 64];
    for &(u, v) in &pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    for _ in 0..100 {
        let (j, i) = (r.random_range(0..64), r.random_range(0..64));
        assert_eq!(tree.path(j, i).unwrap(), bfs_path(&adj, j, i));
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

#[test]
fn boruvka_beats_kruskal_on_sparse_graph() {
    let mut r = rng(6);
    let (l, m) = (10_000, 100_000);
    let edges = random_connected(l, m - (l - 1), &mut r);
    assert!(edges.len() > 99_000);
    let want = mst_kruskal(&edges, l).unwrap();
    let (mut tk, mut tb) = (Vec::new(), Vec::new());
    for _ in 0..9 {
        let t = Instant::now();
        std::hint::black_box(mst_kruskal(&edges, l).unwrap());
        tk.push(t.elapsed());
        let t = Instant::now();
        let b = std::hint::black_box(mst_boruvka_soft(&edges, l, 0.125).unwrap());
        tb.push(t.elapsed());
        assert_eq!(b.edges(), want.edges());
    }
    let (k, b) = (median(tk), median(tb));
    println!("kruskal {k:?}, boruvka_soft {b:?}, ratio {:.3}", b.as_secs_f64() / k.as_secs_f64());
    assert!(b < k);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn union_find_agrees_with_labels(ops in prop::collection::vec((0usize..20, 0usize..20), 0..60)) {
        let mut uf = UnionFind::new(20);
        let mut label: Vec<usize> = (0..20).collect();
        for (a, b) in ops {
            let merged = uf.union(a, b);
            let (la, lb) = (label[a], label[b]);
            prop_assert_eq!(merged, la != lb);
            label.iter_mut().filter(|l| **l == lb).for_each(|l| *l = la);
        }
        for a in 0..20 {
            for b in 0..20 {
                prop_assert_eq!(uf.find(a) == uf.find(b), label[a] == label[b]);
            }
        }
        let distinct: std::collections::BTreeSet<_> = label.iter().collect();
        prop_assert_eq!(uf.components(), distinct.len());
    }

    #[test]
    fn spanning_tree_has_l_minus_one_edges(seed in any::<u64>(), l in 1usize..40) {
        let mut r = rng(seed);
        let edges = random_connected(l, 2 * l, &mut r);
        for algo in MstAlgorithm::ALL {
            let t = algo.run(&edges, l).unwrap();
            prop_assert_eq!(t.edges().len(), l - 1);
            let mut uf = UnionFind::new(l);
            prop_assert!(t.edges().iter().all(|e| uf.union(e.u, e.v)));
        }
    }

    #[test]
    fn every_shape_roots_anywhere(seed in any::<u64>(), l in 1usize..50) {
        let mut r = rng(seed);
        for shape in TreeShape::ALL {
            let t = shape.rooted(l, &mut r).unwrap();
            prop_assert_eq!(t.order().len(), l);
            for &v in &t.order()[1..] {
                prop_assert!(t.position(t.parent()[v]) < t.position(v));
            }
        }
    }
}
