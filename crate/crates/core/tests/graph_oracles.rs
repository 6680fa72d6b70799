use std::collections::{BTreeSet, VecDeque};

use ggssm::graph::{build_candidate_edges, weigh_edges, CandidateTopology, FeatureSet};
use ggssm::matrix::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator guard for zero rows.
const NORM_GUARD: f64 = 1e-12;

fn cos_weight(a: &[f64], b: &[f64]) -> f64 {
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for k in 0..a.len() {
        ab += a[k] * b[k];
        aa += a[k] * a[k];
        bb += b[k] * b[k];
    }
    (-(ab / (aa.sqrt() * bb.sqrt() + NORM_GUARD))).exp()
}

fn connected(l: usize, pairs: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); l];
    for &(u, v) in pairs {
        adj[u].push(v);
        adj[v].push(u);
    }
    let mut seen = vec![false; l];
    let mut q = VecDeque::from([0]);
    seen[0] = true;
    while let Some(x) = q.pop_front() {
        for &y in &adj[x] {
            if !seen[y] {
                seen[y] = true;
                q.push_back(y);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[test]
fn weights_match_direct_pairwise_cosine() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let x = FeatureSet::new(Matrix::from_fn(4, 3, |_, _| r.random_range(-1.0..1.0))).unwrap();
    let pairs = build_candidate_edges(&x, CandidateTopology::Dense).unwrap();
    assert_eq!(pairs.len(), 6);
    for e in weigh_edges(&x, &pairs).unwrap() {
        let want = cos_weight(x.row(e.u), x.row(e.v));
        assert!((e.w - want).abs() <= 1e-14 * want, "({}, {}): {} vs {want}", e.u, e.v, e.w);
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn unit_vector_reference_weights() {
    let x = FeatureSet::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let e = weigh_edges(&x, &[(0, 1), (0, 2), (0, 3)]).unwrap();
    assert!((e[0].w - 0.367879).abs() < 1e-6);
    assert!((e[1].w - 2.718282).abs() < 1e-6);
    assert_eq!(e[2].w, 1.0);
}

fn line_features(t: &[f64]) -> FeatureSet {
    FeatureSet::from_rows(&t.iter().map(|&t| vec![1.0, t]).collect::<Vec<_>>()).unwrap()
}

/// Symmetrized nearest neighbours by exhaustive search.
fn nearest_pairs(x: &FeatureSet) -> BTreeSet<(usize, usize)> {
    let l = x.len();
    (0..l)
        .map(|i| {
            let j = (0..l)
                .filter(|&j| j != i)
                .min_by(|&a, &b| cos_weight(x.row(i), x.row(a)).total_cmp(&cos_weight(x.row(i), x.row(b))))
                .unwrap();
            (i.min(j), i.max(j))
        })
        .collect()
}

#[test]
fn knn_on_a_line_is_nearest_neighbour_chain() {
    let x = line_features(&[0.0, 1.0, 3.0, 6.0, 10.0]);
    let got: BTreeSet<_> = build_candidate_edges(&x, CandidateTopology::Knn { k: 1 }).unwrap().into_iter().collect();
    let want = nearest_pairs(&x);
    assert_eq!(got, want);
    assert!(connected(5, &got.into_iter().collect::<Vec<_>>()));
}

#[test]
fn knn_augmentation_adds_lightest_bridge() {
    // two tight clusters: nearest neighbours alone leave them apart
    let x = line_features(&[0.0, 0.1, 10.0, 11.0, 0.05]);
    let nn = nearest_pairs(&x);
    assert!(!connected(5, &nn.iter().copied().collect::<Vec<_>>()));
    let got = build_candidate_edges(&x, CandidateTopology::Knn { k: 1 }).unwrap();
    assert!(connected(5, &got));
    let extra: Vec<_> = got.iter().filter(|p| !nn.contains(p)).collect();
    assert_eq!(extra.len(), 1);
    let left = [0, 1, 4];
    let bridge = left
        .iter()
        .flat_map(|&a| [2, 3].map(|b| (a.min(b), a.max(b))))
        .min_by(|p, q| cos_weight(x.row(p.0), x.row(p.1)).total_cmp(&cos_weight(x.row(q.0), x.row(q.1))))
        .unwrap();
    assert_eq!(*extra[0], bridge);
}

#[test]
fn grid_pairs_are_lattice_neighbours() {
    let x = FeatureSet::new(Matrix::from_fn(12, 2, |i, j| (i + j) as f64 + 1.0)).unwrap();
    let topo = CandidateTopology::Grid { rows: 3, cols: 4, connectivity: 4 };
    let got: BTreeSet<_> = build_candidate_edges(&x, topo).unwrap().into_iter().collect();
    let mut want = BTreeSet::new();
    for a in 0..12usize {
        for b in a + 1..12usize {
            let (ra, ca, rb, cb) = (a / 4, a % 4, b / 4, b % 4);
            if ra.abs_diff(rb) + ca.abs_diff(cb) == 1 {
                want.insert((a, b));
            }
        }
    }
    assert_eq!(got, want);
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn row_scaling_leaves_weights_unchanged(
        rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 3..8),
        c in 0.01f64..100.0,
        pick in 0usize..8,
    ) {
        // the zero-row guard makes invariance approximate for tiny norms
        prop_assume!(rows.iter().all(|r| r.iter().map(|v| v * v).sum::<f64>() > 0.25));
        let x = FeatureSet::from_rows(&rows).unwrap();
        let i = pick % rows.len();
        let mut scaled = rows.clone();
        scaled[i].iter_mut().for_each(|v| *v *= c);
        let y = FeatureSet::from_rows(&scaled).unwrap();
        let pairs = build_candidate_edges(&x, CandidateTopology::Dense).unwrap();
        for (a, b) in weigh_edges(&x, &pairs).unwrap().iter().zip(weigh_edges(&y, &pairs).unwrap()) {
            prop_assert!((a.w - b.w).abs() <= 1e-9 * a.w);
        }
    }

    #[test]
    fn weights_lie_in_unit_cosine_range(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 2..10)) {
        let x = FeatureSet::from_rows(&rows).unwrap();
        let pairs = build_candidate_edges(&x, CandidateTopology::Dense).unwrap();
        for e in weigh_edges(&x, &pairs).unwrap() {
            prop_assert!(e.w >= (-1.0f64).exp() * (1.0 - 1e-12) && e.w <= 1f64.exp() * (1.0 + 1e-12));
        }
    }
}
