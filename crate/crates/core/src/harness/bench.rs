use std::fmt::Write as _;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{interleaved_medians, median_time, millis, rng, TreeShape};
use crate::error::{contract, GgError, Result};
use crate::exec::Exec;
use crate::graph::{weights_distinct, CandidateTopology, FeatureSet};
use crate::layer::{candidate_graph, layer_forward_traced, LayerConfig, LayerWeights};
use crate::matrix::Matrix;
use crate::mst::{MstAlgorithm, RootedTree};
use crate::scan::{scan_dense_oracle, scan_into, PathConvention, ScanMode, ScanParams, ScanWorkspace};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Growth per doubling of `L` between two measurements.
pub fn per_doubling(l0: usize, t0: f64, l1: usize, t1: f64) -> f64 {
    (t1 / t0).powf(1.0 / (l1 as f64 / l0 as f64).log2())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub sizes: Vec<usize>,
    pub state_dim: usize,
    pub repeats: usize,
    /// Each timed sample repeats the call until it lasts at least this long.
    pub min_sample_ms: f64,
    /// Sizes at which the quadratic dense oracle is timed.
    pub oracle_sizes: Vec<usize>,
    pub oracle_state_dim: usize,
    /// Also time the spanning tree of a 4-connected grid over `L` nodes.
    pub mst: bool,
    /// Also time the parallel scan path.
    pub parallel: bool,
    /// State sizes timed at `L = state_dim_nodes` to check linear growth in `N`.
    pub state_dims: Vec<usize>,
    pub state_dim_nodes: usize,
    pub seed: u64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            sizes: (12..=17).map(|e| 1 << e).collect(),
            state_dim: 64,
            repeats: 11,
            min_sample_ms: 30.0,
            oracle_sizes: vec![1 << 10, 1 << 11, 1 << 12],
            oracle_state_dim: 16,
            mst: true,
            parallel: false,
            state_dims: vec![32, 64, 128],
            state_dim_nodes: 1 << 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub scan_ms: f64,
    pub scan_ratio: Option<f64>,
    pub scan_parallel_ms: Option<f64>,
    pub mst_ms: Option<f64>,
    pub mst_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub nodes: usize,
    pub oracle_ms: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDimRow {
    pub state_dim: usize,
    pub scan_ms: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub schema_version: u32,
    pub config: ScalingConfig,
    pub rows: Vec<ScalingRow>,
    pub oracle_rows: Vec<OracleRow>,
    pub state_dim_rows: Vec<StateDimRow>,
}

fn random_params(l: usize, n: usize, r: &mut impl Rng) -> Result<ScanParams<f64>> {
    ScanParams::new(
        Matrix::from_fn(l, n, |_, _| r.random_range(0.1..0.9)),
        Matrix::from_fn(l, n, |_, _| r.random_range(-1.0..1.0)),
    )
}

fn instances(sizes: &[usize], n: usize, r: &mut impl Rng) -> Result<Vec<(RootedTree, ScanParams<f64>)>> {
    sizes.iter().map(|&l| Ok((TreeShape::Random.rooted(l, r)?, random_params(l, n, r)?))).collect()
}

fn grid_features(l: usize, r: &mut impl Rng) -> Result<(FeatureSet, CandidateTopology)> {
    let mut rows = (l as f64).sqrt() as usize;
    while !l.is_multiple_of(rows) {
        rows -= 1;
    }
    let x = FeatureSet::new(Matrix::from_fn(l, 4, |_, _| r.random_range(-1.0..1.0)))?;
    Ok((x, CandidateTopology::Grid { rows, cols: l / rows, connectivity: 4 }))
}

/// Median wall times of the full scan (and optionally the spanning tree and
/// the dense oracle) over growing `L`, single-threaded unless asked.
pub fn bench_scaling(cfg: &ScalingConfig) -> Result<ScalingReport> {
    contract!(!cfg.sizes.is_empty(), "no sizes given");
    contract!(cfg.sizes.windows(2).all(|w| w[0] < w[1]), "sizes must be strictly ascending");
    contract!(cfg.sizes[0] >= 2 && cfg.state_dim >= 1 && cfg.oracle_state_dim >= 1, "need L >= 2 and N >= 1");
    contract!(cfg.oracle_sizes.iter().chain([&cfg.state_dim_nodes]).all(|&l| l >= 1), "sizes must be at least 1");
    contract!(cfg.state_dims.iter().all(|&n| n >= 1), "state sizes must be at least 1");
    for list in [&cfg.oracle_sizes, &cfg.state_dims] {
        contract!(list.windows(2).all(|w| w[0] < w[1]), "sizes must be strictly ascending");
    }
    let min_sample = Duration::from_secs_f64(cfg.min_sample_ms.max(0.0) / 1e3);
    let conv = PathConvention::EdgeCount;
    let mut r = rng(cfg.seed);
    let time_all = |count: usize, f: &mut dyn FnMut(usize)| -> Vec<f64> {
        interleaved_medians(cfg.repeats, min_sample, count, f).into_iter().map(millis).collect()
    };
    // buffers are reused across calls so the timings exclude allocation
    let scan_time = |inst: &[(RootedTree, ScanParams<f64>)], exec: Exec| {
        let mut bufs: Vec<_> =
            inst.iter().map(|(_, p)| (ScanWorkspace::new(), Matrix::zeros(p.nodes(), p.state_dim()))).collect();
        time_all(inst.len(), &mut |i| {
            let (tree, params) = &inst[i];
            let (ws, h) = &mut bufs[i];
            scan_into(tree, params, ScanMode::Full, conv, exec, ws, h).expect("valid scan");
            std::hint::black_box(h);
        })
    };

    let main = instances(&cfg.sizes, cfg.state_dim, &mut r)?;
    let scan_ms = scan_time(&main, Exec::Sequential);
    let scan_parallel_ms = cfg.parallel.then(|| scan_time(&main, Exec::Parallel));
    drop(main);
    let mst_ms = if cfg.mst {
        let graphs = cfg
            .sizes
            .iter()
            .map(|&l| {
                let (x, topology) = grid_features(l, &mut r)?;
                candidate_graph(&x, &LayerConfig { topology, ..LayerConfig::default() }, Exec::Sequential)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(time_all(graphs.len(), &mut |i| {
            std::hint::black_box(MstAlgorithm::Kruskal.run(&graphs[i], cfg.sizes[i]).expect("connected grid"));
        }))
    } else {
        None
    };
    let ratio_at =
        |i: usize, t: &[f64], sizes: &[usize]| (i > 0).then(|| per_doubling(sizes[i - 1], t[i - 1], sizes[i], t[i]));
    let rows = (0..cfg.sizes.len())
        .map(|i| ScalingRow {
            nodes: cfg.sizes[i],
            scan_ms: scan_ms[i],
            scan_ratio: ratio_at(i, &scan_ms, &cfg.sizes),
            scan_parallel_ms: scan_parallel_ms.as_ref().map(|t| t[i]),
            mst_ms: mst_ms.as_ref().map(|t| t[i]),
            mst_ratio: mst_ms.as_ref().and_then(|t| ratio_at(i, t, &cfg.sizes)),
        })
        .collect();

    let oracle = instances(&cfg.oracle_sizes, cfg.oracle_state_dim, &mut r)?;
    let oracle_ms = time_all(oracle.len(), &mut |i| {
        let (tree, params) = &oracle[i];
        std::hint::black_box(scan_dense_oracle(tree, params, conv).expect("valid scan"));
    });
    let oracle_rows = (0..oracle.len())
        .map(|i| OracleRow {
            nodes: cfg.oracle_sizes[i],
            oracle_ms: oracle_ms[i],
            ratio: ratio_at(i, &oracle_ms, &cfg.oracle_sizes),
        })
        .collect();
    drop(oracle);

    let tree = TreeShape::Random.rooted(cfg.state_dim_nodes, &mut r)?;
    let by_n = cfg
        .state_dims
        .iter()
        .map(|&n| Ok((tree.clone(), random_params(cfg.state_dim_nodes, n, &mut r)?)))
        .collect::<Result<Vec<_>>>()?;
    let n_ms = scan_time(&by_n, Exec::Sequential);
    let state_dim_rows = (0..by_n.len())
        .map(|i| StateDimRow {
            state_dim: cfg.state_dims[i],
            scan_ms: n_ms[i],
            ratio: ratio_at(i, &n_ms, &cfg.state_dims),
        })
        .collect();
    Ok(ScalingReport { schema_version: REPORT_SCHEMA_VERSION, config: cfg.clone(), rows, oracle_rows, state_dim_rows })
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

impl ScalingReport {
    pub fn to_table(&self) -> String {
        let mut s =
            format!("{:>8} {:>11} {:>7} {:>11} {:>10} {:>7}\n", "L", "scan_ms", "ratio", "par_ms", "mst_ms", "ratio");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>8} {:>11.3} {:>7} {:>11} {:>10} {:>7}",
                r.nodes,
                r.scan_ms,
                opt(r.scan_ratio, 2),
                opt(r.scan_parallel_ms, 3),
                opt(r.mst_ms, 3),
                opt(r.mst_ratio, 2),
            );
        }
        if !self.oracle_rows.is_empty() {
            let _ = writeln!(s, "\n{:>8} {:>11} {:>7}", "L", "oracle_ms", "ratio");
            for r in &self.oracle_rows {
                let _ = writeln!(s, "{:>8} {:>11.3} {:>7}", r.nodes, r.oracle_ms, opt(r.ratio, 2));
            }
        }
        if !self.state_dim_rows.is_empty() {
            let _ =
                writeln!(s, "\n{:>8} {:>11} {:>7}   (L = {})", "N", "scan_ms", "ratio", self.config.state_dim_nodes);
            for r in &self.state_dim_rows {
                let _ = writeln!(s, "{:>8} {:>11.3} {:>7}", r.state_dim, r.scan_ms, opt(r.ratio, 2));
            }
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub sizes: Vec<usize>,
    pub d_model: usize,
    pub state_dim: usize,
    pub topology: CandidateTopology,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1024, 4096],
            d_model: 8,
            state_dim: 4,
            topology: CandidateTopology::Dense,
            repeats: 5,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub nodes: usize,
    pub edges: usize,
    pub algorithm: MstAlgorithm,
    pub tree_weight: f64,
    /// Largest deviation of the layer output from the Kruskal run.
    pub output_diff: f64,
    pub forward_ms: f64,
    /// Forward time relative to Kruskal at the same size.
    pub relative_time: f64,
    pub mst_ms: f64,
    pub mst_relative: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub schema_version: u32,
    pub config: AblationConfig,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// The row for `algorithm` at the largest edge count.
    pub fn largest(&self, algorithm: MstAlgorithm) -> Option<&AblationRow> {
        let edges = self.rows.iter().map(|r| r.edges).max()?;
        self.rows.iter().find(|r| r.edges == edges && r.algorithm == algorithm)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:>6} {:>9} {:<13} {:>14} {:>11} {:>11} {:>9} {:>10} {:>9}\n",
            "L", "edges", "algorithm", "tree_weight", "output_diff", "forward_ms", "relative", "mst_ms", "mst_rel"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>6} {:>9} {:<13} {:>14.6} {:>11.1e} {:>11.3} {:>8.2}x {:>10.3} {:>8.2}x",
                r.nodes,
                r.edges,
                r.algorithm.name(),
                r.tree_weight,
                r.output_diff,
                r.forward_ms,
                r.relative_time,
                r.mst_ms,
                r.mst_relative,
            );
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Runs the layer with every spanning-tree algorithm on identical inputs.
/// Outputs must agree bit for bit; times are reported relative to Kruskal.
pub fn ablate_mst(cfg: &AblationConfig) -> Result<AblationReport> {
    contract!(!cfg.sizes.is_empty(), "no sizes given");
    contract!(cfg.sizes.iter().all(|&l| l >= 2), "ablation sizes must be at least 2");
    let mut r = rng(cfg.seed);
    let w = LayerWeights::random(cfg.d_model, cfg.state_dim, &mut r);
    let mut rows = Vec::new();
    for &l in &cfg.sizes {
        let x = FeatureSet::new(Matrix::from_fn(l, cfg.d_model, |_, _| r.random_range(-1.0..1.0)))?;
        let base = LayerConfig { topology: cfg.topology, ..LayerConfig::default() };
        let edges = candidate_graph(&x, &base, Exec::Sequential)?;
        contract!(weights_distinct(&edges), "edge weights are not distinct at L = {l}");
        let mut reference: Option<Matrix<f64>> = None;
        let start = rows.len();
        for algorithm in MstAlgorithm::ALL {
            let lc = LayerConfig { mst_algorithm: algorithm, ..base };
            let trace = layer_forward_traced(&x, &w, &lc, Exec::Sequential)?;
            let output_diff = reference.as_ref().map_or(0.0, |y| y.max_abs_diff(&trace.y));
            if reference.as_ref().is_some_and(|y| *y != trace.y) {
                return Err(GgError::Invariant(format!(
                    "{} output differs from kruskal at L = {l} by {output_diff:e}",
                    algorithm.name()
                )));
            }
            let tree_weight = trace.tree.total_weight();
            reference.get_or_insert(trace.y);
            let forward_ms = millis(median_time(cfg.repeats, Duration::ZERO, || {
                std::hint::black_box(layer_forward_traced(&x, &w, &lc, Exec::Sequential).expect("ran above"));
            }));
            let mst_ms = millis(median_time(cfg.repeats, Duration::ZERO, || {
                std::hint::black_box(algorithm.run(&edges, l).expect("ran above"));
            }));
            rows.push(AblationRow {
                nodes: l,
                edges: edges.len(),
                algorithm,
                tree_weight,
                output_diff,
                forward_ms,
                relative_time: 1.0,
                mst_ms,
                mst_relative: 1.0,
            });
        }
        let (kf, km) = (rows[start].forward_ms, rows[start].mst_ms);
        for row in &mut rows[start..] {
            row.relative_time = row.forward_ms / kf;
            row.mst_relative = row.mst_ms / km;
        }
    }
    Ok(AblationReport { schema_version: REPORT_SCHEMA_VERSION, config: cfg.clone(), rows })
}
