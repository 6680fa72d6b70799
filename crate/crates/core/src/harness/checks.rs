//! Randomized invariant checks shared by `selftest` and the acceptance suite.
//!
//! Every check compares the fast path with an independent reference: the
//! dense path-product scan, the exhaustive spanning-tree search, the plain
//! 1-D recurrence, or a multiset ledger for the soft heap.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gradcheck_suite, rng, TreeShape};
use crate::error::Result;
use crate::exec::Exec;
use crate::format::{Tensor, TensorBundle};
use crate::graph::{
    build_candidate_edges_with, weigh_edges_with, CandidateTopology, FeatureSet, WeightedEdge, DEFAULT_DENSE_CAP,
};
use crate::layer::{sequential_scan_1d, LayerWeights};
use crate::matrix::Matrix;
use crate::mst::{mst_bruteforce, root_tree, MstAlgorithm, OrdF64, RootedTree, SoftHeap, TreeDocument};
use crate::scan::{scan, scan_dense_oracle, scan_full, scan_rooted, PathConvention, ScanMode, ScanParams};

pub const ORACLE_TOL: f64 = 1e-9;
pub const CHAIN_TOL: f64 = 1e-12;
pub const ROOT_TOL: f64 = 1e-10;
pub const STATE_DIMS: [usize; 3] = [1, 4, 16];

/// Result of one invariant group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    /// Largest observed deviation, in the check's own units.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, cases: usize, worst: f64, tolerance: f64, passed: bool, detail: String) -> Self {
        Self { name: name.into(), cases, worst, tolerance, passed, detail }
    }

    fn bounded(name: &str, cases: usize, worst: f64, tolerance: f64) -> Self {
        let detail = format!("{cases} cases, worst {worst:.3e} (tolerance {tolerance:.0e})");
        Self::new(name, cases, worst, tolerance, worst <= tolerance, detail)
    }
}

/// `sup |x - y| / sup |y|`, with `0` when both are zero.
pub fn rel_sup_error(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let diff = x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = y.as_slice().iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

fn random_params(nodes: usize, state_dim: usize, r: &mut impl Rng) -> Result<ScanParams<f64>> {
    ScanParams::new(
        Matrix::from_fn(nodes, state_dim, |_, _| r.random_range(0.0..1.0)),
        Matrix::from_fn(nodes, state_dim, |_, _| r.random_range(-1.0..1.0)),
    )
}

/// `scan_full` against the dense oracle on trees of every shape. Both path
/// conventions are exercised, alternating per instance.
pub fn check_oracle_equivalence(instances: usize, max_nodes: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..instances {
        let shape = TreeShape::ALL[i % 3];
        let nodes = r.random_range(2..=max_nodes.max(2));
        let n = STATE_DIMS[r.random_range(0..STATE_DIMS.len())];
        let conv = if i % 2 == 0 { PathConvention::EdgeCount } else { PathConvention::InteriorOnly };
        let tree = shape.rooted(nodes, &mut r)?;
        let params = random_params(nodes, n, &mut r)?;
        let fast = scan_full(&tree, &params, conv)?;
        let dense = scan_dense_oracle(&tree, &params, conv)?;
        worst = worst.max(rel_sup_error(&fast, &dense));
    }
    Ok(CheckOutcome::bounded("oracle_equivalence", instances, worst, ORACLE_TOL))
}

/// `scan_rooted` on the chain `0 - 1 - ... - (L-1)` rooted at its last node
/// against the 1-D recurrence. Reports the max absolute deviation.
pub fn check_chain_reduction(chains: usize, max_nodes: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..chains {
        let nodes = r.random_range(1..=max_nodes.max(1));
        let n = STATE_DIMS[r.random_range(0..STATE_DIMS.len())];
        let params = random_params(nodes, n, &mut r)?;
        let tree = RootedTree::chain(nodes, nodes - 1)?;
        let h = scan_rooted(&tree, &params, PathConvention::EdgeCount)?;
        let reference = sequential_scan_1d(&params);
        let dev = h.as_slice().iter().zip(reference.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(dev);
    }
    Ok(CheckOutcome::bounded("chain_reduction", chains, worst, CHAIN_TOL))
}

/// `scan_full` on one tree rooted at `roots` random nodes; every output is
/// compared with the first.
pub fn check_root_invariance(trees: usize, roots: usize, max_nodes: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for i in 0..trees {
        let nodes = r.random_range(2..=max_nodes.max(2));
        let n = STATE_DIMS[r.random_range(0..STATE_DIMS.len())];
        let pairs = TreeShape::ALL[i % 3].pairs(nodes, &mut r);
        let params = random_params(nodes, n, &mut r)?;
        let mut first: Option<Matrix<f64>> = None;
        for _ in 0..roots {
            let tree = RootedTree::from_pairs(nodes, &pairs, r.random_range(0..nodes))?;
            let h = scan_full(&tree, &params, PathConvention::EdgeCount)?;
            match &first {
                None => first = Some(h),
                Some(h0) => worst = worst.max(rel_sup_error(&h, h0)),
            }
        }
    }
    Ok(CheckOutcome::bounded("root_invariance", trees, worst, ROOT_TOL))
}

fn random_connected_graph(nodes: usize, distinct: bool, r: &mut impl Rng) -> Vec<WeightedEdge> {
    let weight = |r: &mut dyn rand::RngCore| {
        if distinct {
            r.random_range(0.0..1.0)
        } else {
            r.random_range(1..=4) as f64
        }
    };
    let mut edges: Vec<WeightedEdge> =
        super::random_tree_pairs(nodes, r).into_iter().map(|(u, v)| WeightedEdge::new(u, v, weight(r))).collect();
    let density = r.random_range(0.0..1.0);
    for u in 0..nodes {
        for v in u + 1..nodes {
            if !edges.iter().any(|e| (e.u, e.v) == (u, v)) && r.random_bool(density) {
                edges.push(WeightedEdge::new(u, v, weight(r)));
            }
        }
    }
    edges
}

/// Every MST algorithm against exhaustive search on small graphs. Even
/// instances use distinct weights and also require identical edge sets;
/// odd instances draw small integer weights with many ties. Reports the
/// number of mismatches.
pub fn check_mst_optimality(graphs: usize, max_nodes: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    for i in 0..graphs {
        let nodes = r.random_range(1..=max_nodes.max(1));
        let distinct = i % 2 == 0;
        let edges = random_connected_graph(nodes, distinct, &mut r);
        let best = mst_bruteforce(&edges, nodes)?;
        for algo in MstAlgorithm::ALL {
            let t = algo.run(&edges, nodes)?;
            let ok = t.total_weight() == best.total_weight() && (!distinct || t.edges() == best.edges());
            if !ok {
                failures.push(format!("graph {i} ({}): {} vs {}", algo.name(), t.total_weight(), best.total_weight()));
            }
        }
    }
    let detail = match failures.first() {
        None => format!("{graphs} graphs, all algorithms optimal"),
        Some(f) => format!("{} mismatches, first: {f}", failures.len()),
    };
    Ok(CheckOutcome::new("mst_optimality", graphs, failures.len() as f64, 0.0, failures.is_empty(), detail))
}

/// Random insert / extract / meld sequences. After every operation the
/// corrupted count must stay within `ceil(eps * insertions)`; at the end
/// every inserted payload must have come out exactly once. Reports the
/// largest `corrupted / bound` ratio seen.
pub fn check_soft_heap(sequences: usize, max_ops: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    let mut lost = 0usize;
    for s in 0..sequences {
        let epsilon = if s % 2 == 0 { 1.0 / 8.0 } else { 1.0 / 16.0 };
        let ops = r.random_range(1..=max_ops.max(1));
        let mut heap = SoftHeap::new(epsilon)?;
        let mut ledger: HashMap<u32, i64> = HashMap::new();
        let mut next = 0u32;
        let mut insert = |h: &mut SoftHeap<OrdF64, u32>, r: &mut dyn rand::RngCore, ledger: &mut HashMap<u32, i64>| {
            h.insert(OrdF64(r.random_range(0.0..1.0)), next);
            *ledger.entry(next).or_default() += 1;
            next += 1;
        };
        let mut check = |h: &SoftHeap<OrdF64, u32>| {
            let bound = h.corruption_bound();
            if h.corrupted_count() > bound {
                violations += 1;
            }
            if bound > 0 {
                worst = worst.max(h.corrupted_count() as f64 / bound as f64);
            }
        };
        for _ in 0..ops {
            match r.random_range(0..20) {
                0..=11 => insert(&mut heap, &mut r, &mut ledger),
                12..=18 => {
                    if let Ok(e) = heap.extract_min() {
                        *ledger.entry(e.item).or_default() -= 1;
                    }
                }
                _ => {
                    let mut other = SoftHeap::new(epsilon)?;
                    for _ in 0..r.random_range(0..32) {
                        insert(&mut other, &mut r, &mut ledger);
                    }
                    heap.meld(other);
                }
            }
            check(&heap);
        }
        while let Ok(e) = heap.extract_min() {
            *ledger.entry(e.item).or_default() -= 1;
            check(&heap);
        }
        lost += ledger.values().filter(|&&c| c != 0).count();
    }
    let passed = violations == 0 && lost == 0;
    let detail = format!(
        "{sequences} sequences, worst corrupted/bound {worst:.3}, {violations} bound violations, {lost} payloads not conserved"
    );
    Ok(CheckOutcome::new("soft_heap_bound", sequences, worst, 1.0, passed, detail))
}

/// Runs `f` on a pool with several workers, so the parallel paths fan out
/// even on a single-core machine.
fn on_workers<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(4).build() {
        return pool.install(f);
    }
    f()
}

/// Sequential and parallel execution must agree bit for bit.
pub fn check_parallel_equivalence(instances: usize, seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut mismatches = 0usize;
    for i in 0..instances {
        let nodes = r.random_range(2..=4096);
        let n = STATE_DIMS[r.random_range(0..STATE_DIMS.len())];
        let tree = TreeShape::ALL[i % 3].rooted(nodes, &mut r)?;
        let params = random_params(nodes, n, &mut r)?;
        for mode in [ScanMode::Full, ScanMode::Rooted] {
            let run = |exec| scan(&tree, &params, mode, PathConvention::EdgeCount, exec);
            let seq = run(Exec::Sequential)?;
            let par = on_workers(|| run(Exec::Parallel))?;
            mismatches += usize::from(seq != par);
        }
        let x = FeatureSet::new(Matrix::from_fn(nodes.min(256), 3, |_, _| r.random_range(-1.0..1.0)))?;
        let weighted = |exec| -> Result<Vec<WeightedEdge>> {
            let pairs = build_candidate_edges_with(&x, CandidateTopology::Dense, DEFAULT_DENSE_CAP, exec)?;
            weigh_edges_with(&x, &pairs, exec)
        };
        mismatches += usize::from(weighted(Exec::Sequential)? != on_workers(|| weighted(Exec::Parallel))?);
    }
    let detail = format!("{instances} instances, {mismatches} mismatches");
    Ok(CheckOutcome::new("parallel_equivalence", instances, mismatches as f64, 0.0, mismatches == 0, detail))
}

/// Tree documents, tensors and weight bundles must read back bit-exactly.
pub fn check_serialization(seed: u64) -> Result<CheckOutcome> {
    let mut r = rng(seed);
    let mut failures = Vec::new();
    let x = FeatureSet::new(Matrix::from_fn(40, 5, |_, _| r.random_range(-1.0..1.0)))?;
    let pairs = build_candidate_edges_with(&x, CandidateTopology::Dense, DEFAULT_DENSE_CAP, Exec::Sequential)?;
    let edges = weigh_edges_with(&x, &pairs, Exec::Sequential)?;
    let tree = MstAlgorithm::Kruskal.run(&edges, x.len())?;
    let doc = TreeDocument::new(&tree, 0, Some("kruskal"));
    let back = TreeDocument::from_json(&doc.to_json()?)?;
    if back != doc || back.tree()?.edges() != tree.edges() {
        failures.push("tree document");
    }
    if back.rooted()? != root_tree(&tree, 0)? {
        failures.push("rooted tree");
    }
    let t = Tensor::from_matrix(x.matrix());
    if Tensor::from_bytes(&t.to_bytes())? != t {
        failures.push("tensor");
    }
    let w = LayerWeights::random(5, 3, &mut r);
    let bundle = w.to_bundle();
    if LayerWeights::from_bundle(&TensorBundle::from_bytes(&bundle.to_bytes()?)?)? != w {
        failures.push("weight bundle");
    }
    let detail = if failures.is_empty() { "all formats round-trip".to_string() } else { failures.join(", ") };
    Ok(CheckOutcome::new("serialization", 4, failures.len() as f64, 0.0, failures.is_empty(), detail))
}

/// Gradient check with a small trial count.
pub fn check_gradients(trials: usize, seed: u64) -> Result<CheckOutcome> {
    let report = gradcheck_suite(trials, seed)?;
    let mut out = CheckOutcome::bounded("gradients", trials, report.max_rel_error, report.tolerance);
    out.passed = report.passed;
    Ok(out)
}

/// Outcome of the whole suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub groups: Vec<CheckOutcome>,
}

impl SelftestReport {
    pub fn passed(&self) -> usize {
        self.groups.iter().filter(|g| g.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.groups.len()
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            s.push_str(&format!("{} {:<22} {}\n", if g.passed { "ok  " } else { "FAIL" }, g.name, g.detail));
        }
        s.push_str(&format!("{}/{} invariant groups passed\n", self.passed(), self.groups.len()));
        s
    }
}

/// Scaled-down run of every invariant group. Takes a few seconds.
pub fn selftest(seed: u64) -> Result<SelftestReport> {
    let groups = vec![
        check_oracle_equivalence(40, 128, seed)?,
        check_chain_reduction(40, 256, seed)?,
        check_root_invariance(20, 5, 128, seed)?,
        check_mst_optimality(100, 8, seed)?,
        check_soft_heap(40, 2000, seed)?,
        check_parallel_equivalence(6, seed)?,
        check_gradients(12, seed)?,
        check_serialization(seed)?,
    ];
    Ok(SelftestReport { seed, groups })
}
