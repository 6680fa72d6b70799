use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ggssm::error::{GgError, Result};
use ggssm::exec::Exec;
use ggssm::format::{read_features, write_tensor, Tensor, TensorBundle};
use ggssm::graph::{CandidateTopology, WeightedEdge};
use ggssm::harness::{
    self, ablate_mst, bench_scaling, gen_task, gradcheck_suite, rel_sup_error, selftest, train_from, AblationConfig,
    ScalingConfig, TaskKind, TrainConfig, TreeSource, ORACLE_TOL, REPORT_SCHEMA_VERSION,
};
use ggssm::layer::{candidate_graph, layer_forward_traced, LayerConfig, LayerWeights};
use ggssm::matrix::Matrix;
use ggssm::mst::{root_tree, MstAlgorithm, RootPolicy, TreeDocument};
use ggssm::scan::{scan, scan_dense_oracle, PathConvention, ScanMode, ScanParams};

const THREADS_ENV: &str = "GGSSM_THREADS";

#[derive(Parser)]
#[command(name = "ggssm", version, about = "Graph-generating state space model toolkit")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; overrides GGSSM_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the candidate graph and write its minimum spanning tree.
    Mst(MstArgs),
    /// Run the tree scan over a tree document and a parameter bundle.
    Scan(ScanArgs),
    /// Full layer forward pass.
    Layer(LayerArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
    /// Scaling benchmark of the scan, the spanning tree and the dense oracle.
    Bench(BenchArgs),
    /// Layer outputs and timings under each spanning-tree algorithm.
    Ablate(AblateArgs),
    /// Train one layer on a synthetic task.
    Train(TrainArgs),
    /// Run every invariant group on small random instances.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum InputKind {
    /// One row of features per node.
    Features,
    /// A symmetric L x L matrix of edge weights.
    Weights,
}

#[derive(Args)]
struct MstArgs {
    /// Feature file (GGT1 or headered CSV).
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Features)]
    input_kind: InputKind,
    /// dense, grid:HxW[:8] or knn:K.
    #[arg(long, default_value = "dense")]
    topology: CandidateTopology,
    /// kruskal, prim or boruvka_soft.
    #[arg(long, default_value = "kruskal")]
    algo: MstAlgorithm,
    /// Root node; defaults to the root policy's choice.
    #[arg(long)]
    root: Option<usize>,
    #[arg(long, default_value = "node_zero")]
    root_policy: RootPolicy,
    /// Tree document path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    /// Tree document written by `mst` or `layer`.
    #[arg(long)]
    tree: PathBuf,
    /// GGTC bundle holding `a` and `u`, both L x N.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value = "full")]
    mode: ScanMode,
    #[arg(long, default_value = "edge_count")]
    convention: PathConvention,
    /// Hidden states as a GGT1 tensor.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the dense oracle and fail if the deviation exceeds 1e-9.
    #[arg(long)]
    oracle_check: bool,
}

#[derive(Args)]
struct LayerArgs {
    #[arg(long)]
    input: PathBuf,
    /// GGTC weight bundle; random weights from --seed when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// State size of random weights.
    #[arg(long, default_value_t = 4)]
    state_dim: usize,
    /// LayerConfig JSON document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Layer output as a GGT1 tensor.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tree_out: Option<PathBuf>,
    /// Discretized scan parameters, readable by `scan --params`.
    #[arg(long)]
    params_out: Option<PathBuf>,
    #[arg(long)]
    hidden_out: Option<PathBuf>,
    /// Writes the weights used, random or not.
    #[arg(long)]
    save_weights: Option<PathBuf>,
    /// Print per-stage wall times.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Node counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    state_dim: Option<usize>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    min_sample_ms: Option<f64>,
    /// Dense-oracle node counts; pass an empty string to skip.
    #[arg(long, value_delimiter = ',')]
    oracle_sizes: Option<Vec<usize>>,
    /// State sizes timed at a fixed node count; pass an empty string to skip.
    #[arg(long, value_delimiter = ',')]
    state_dims: Option<Vec<usize>>,
    #[arg(long)]
    no_mst: bool,
    /// Also time the parallel scan.
    #[arg(long)]
    parallel: bool,
    /// Fail unless every scan doubling lies in [1.6, 2.6] and every oracle doubling is at least 3.2.
    #[arg(long)]
    check: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    state_dim: Option<usize>,
    #[arg(long)]
    topology: Option<CandidateTopology>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// tree_diffusion or chain_copy[:LAG].
    #[arg(long, default_value = "tree_diffusion")]
    task: TaskKind,
    #[arg(long, default_value_t = 32)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    state_dim: usize,
    #[arg(long, default_value_t = 500)]
    steps: usize,
    #[arg(long, default_value_t = 1e-2)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value = "full")]
    scan_mode: ScanMode,
    /// mst or chain.
    #[arg(long, default_value = "mst")]
    tree: TreeSource,
    /// Also train the chain baseline from the same initial weights.
    #[arg(long)]
    baseline: bool,
    /// Include per-step wall times in the metrics document.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &GgError) -> u8 {
    match e {
        GgError::Invariant(_) | GgError::Diverged { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<()> {
    let exec = configure_threads(cli.threads)?;
    let seed = cli.seed;
    match cli.command {
        Command::Mst(a) => cmd_mst(a, exec),
        Command::Scan(a) => cmd_scan(a, exec),
        Command::Layer(a) => cmd_layer(a, seed, exec),
        Command::Gradcheck(a) => cmd_gradcheck(a, seed),
        Command::Bench(a) => cmd_bench(a, seed),
        Command::Ablate(a) => cmd_ablate(a, seed),
        Command::Train(a) => cmd_train(a, seed),
        Command::Selftest(a) => cmd_selftest(a, seed),
    }
}

fn configure_threads(flag: Option<usize>) -> Result<Exec> {
    let n =
        match flag {
            Some(n) => Some(n),
            None => match std::env::var(THREADS_ENV) {
                Ok(v) => Some(v.trim().parse().map_err(|_| {
                    GgError::InvalidConfig(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))
                })?),
                Err(_) => None,
            },
        };
    let Some(n) = n else { return Ok(Exec::Parallel) };
    if n == 0 {
        return Err(GgError::InvalidConfig("thread count must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| GgError::InvalidConfig(e.to_string()))?;
    Ok(if n == 1 { Exec::Sequential } else { Exec::Parallel })
}

/// Prefixes I/O errors with the offending path.
fn at<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        GgError::Io(io) => GgError::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

/// Writes `text` to `path`, or to stdout when there is no path.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => at(p, std::fs::write(p, text).map_err(GgError::from)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &serde_json::Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn weight_matrix_edges(m: &Matrix<f64>) -> Result<Vec<WeightedEdge>> {
    let l = m.rows();
    if m.cols() != l {
        return Err(GgError::InvalidInput(format!("weight matrix is {l} x {}, expected square", m.cols())));
    }
    let mut edges = Vec::with_capacity(l * l.saturating_sub(1) / 2);
    for u in 0..l {
        for v in u + 1..l {
            if m.get(u, v) != m.get(v, u) {
                return Err(GgError::InvalidInput(format!("weight matrix is not symmetric at ({u}, {v})")));
            }
            edges.push(WeightedEdge::new(u, v, m.get(u, v)));
        }
    }
    Ok(edges)
}

fn cmd_mst(a: MstArgs, exec: Exec) -> Result<()> {
    let x = at(&a.input, read_features(&a.input))?;
    let edges = match a.input_kind {
        InputKind::Features => {
            let cfg = LayerConfig { topology: a.topology, ..LayerConfig::default() };
            candidate_graph(&x, &cfg, exec)?
        }
        InputKind::Weights => {
            if a.topology != CandidateTopology::Dense {
                return Err(GgError::InvalidConfig("a weight matrix input needs --topology dense".into()));
            }
            weight_matrix_edges(x.matrix())?
        }
    };
    let tree = a.algo.run(&edges, x.len())?;
    let root = a.root.unwrap_or_else(|| a.root_policy.pick(&tree));
    let doc = TreeDocument::new(&tree, root, Some(a.algo.name()));
    root_tree(&tree, root)?;
    match &a.out {
        Some(p) => {
            at(p, doc.write(p))?;
            println!(
                "L={} candidate_edges={} tree_edges={} total_weight={} algorithm={}",
                x.len(),
                edges.len(),
                tree.edges().len(),
                tree.total_weight(),
                a.algo.name()
            );
            Ok(())
        }
        None => emit(None, &doc.to_json()?),
    }
}

fn read_params(path: &Path) -> Result<ScanParams<f64>> {
    let bundle = TensorBundle::from_bytes(&std::fs::read(path)?)?;
    ScanParams::new(bundle.get("a")?.clone().into_matrix()?, bundle.get("u")?.clone().into_matrix()?)
}

fn params_bundle(p: &ScanParams<f64>) -> TensorBundle {
    let mut b = TensorBundle::default();
    b.push("a", Tensor::from_matrix(p.a()));
    b.push("u", Tensor::from_matrix(p.u()));
    b
}

fn cmd_scan(a: ScanArgs, exec: Exec) -> Result<()> {
    let tree = at(&a.tree, TreeDocument::read(&a.tree))?.rooted()?;
    let params = at(&a.params, read_params(&a.params))?;
    let h = scan(&tree, &params, a.mode, a.convention, exec)?;
    if let Some(p) = &a.out {
        at(p, write_tensor(p, &Tensor::from_matrix(&h)))?;
    }
    println!("scanned L={} N={} mode={:?} root={}", params.nodes(), params.state_dim(), a.mode, tree.root());
    if a.oracle_check {
        if a.mode != ScanMode::Full {
            return Err(GgError::InvalidConfig("--oracle-check compares the full scan; use --mode full".into()));
        }
        let dev = rel_sup_error(&h, &scan_dense_oracle(&tree, &params, a.convention)?);
        println!("max deviation vs dense oracle: {dev:.3e} (tolerance {ORACLE_TOL:.0e})");
        if dev > ORACLE_TOL {
            return Err(GgError::Invariant(format!("scan deviates from the dense oracle by {dev:.3e}")));
        }
    }
    Ok(())
}

fn cmd_layer(a: LayerArgs, seed: u64, exec: Exec) -> Result<()> {
    let x = at(&a.input, read_features(&a.input))?;
    let w = match &a.weights {
        Some(p) => at(p, LayerWeights::read(p))?,
        None => LayerWeights::random(x.dim(), a.state_dim, &mut harness::rng(seed)),
    };
    let cfg = match &a.config {
        Some(p) => LayerConfig::from_json(&at(p, std::fs::read_to_string(p).map_err(GgError::from))?)?,
        None => LayerConfig::default(),
    };
    let trace = layer_forward_traced(&x, &w, &cfg, exec)?;
    if let Some(p) = &a.out {
        at(p, write_tensor(p, &Tensor::from_matrix(&trace.y)))?;
    }
    if let Some(p) = &a.tree_out {
        let doc = TreeDocument::new(&trace.tree, trace.rooted.root(), Some(cfg.mst_algorithm.name()));
        at(p, doc.write(p))?;
    }
    if let Some(p) = &a.params_out {
        at(p, std::fs::write(p, params_bundle(&trace.params).to_bytes()?).map_err(GgError::from))?;
    }
    if let Some(p) = &a.hidden_out {
        at(p, write_tensor(p, &Tensor::from_matrix(&trace.h)))?;
    }
    if let Some(p) = &a.save_weights {
        at(p, w.write(p))?;
    }
    println!(
        "L={} D={} N={} candidate_edges={} total_weight={} root={}",
        x.len(),
        x.dim(),
        w.state_dim(),
        trace.edges.len(),
        trace.tree.total_weight(),
        trace.rooted.root()
    );
    if a.timings {
        let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
        let t = trace.times;
        println!(
            "graph_ms={:.3} mst_ms={:.3} scan_ms={:.3} total_ms={:.3}",
            ms(t.graph),
            ms(t.mst),
            ms(t.scan),
            ms(t.total)
        );
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs, seed: u64) -> Result<()> {
    let report = gradcheck_suite(a.trials, seed)?;
    if let Some(p) = &a.out {
        let doc = json!({ "schema_version": REPORT_SCHEMA_VERSION, "report": report });
        emit(Some(p), &json_text(&doc)?)?;
    }
    println!(
        "gradcheck: {} trials, max relative error {:.3e} (tolerance {:.0e})",
        report.trials.len(),
        report.max_rel_error,
        report.tolerance
    );
    for t in report.failures() {
        println!("  trial {} failed: scan {:.3e}, head {:.3e}", t.trial, t.scan_error, t.head_error);
    }
    if !report.passed {
        return Err(GgError::Invariant("gradient check failed".into()));
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs, seed: u64) -> Result<()> {
    let d = ScalingConfig::default();
    let cfg = ScalingConfig {
        sizes: a.sizes.unwrap_or(d.sizes),
        state_dim: a.state_dim.unwrap_or(d.state_dim),
        repeats: a.repeats.unwrap_or(d.repeats),
        min_sample_ms: a.min_sample_ms.unwrap_or(d.min_sample_ms),
        oracle_sizes: a.oracle_sizes.unwrap_or(d.oracle_sizes),
        state_dims: a.state_dims.unwrap_or(d.state_dims),
        mst: !a.no_mst,
        parallel: a.parallel,
        seed,
        ..d
    };
    let report = bench_scaling(&cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.out {
        emit(Some(p), &report.to_json()?)?;
    }
    if a.check {
        let bad_scan: Vec<_> = report
            .rows
            .iter()
            .filter_map(|r| r.scan_ratio.filter(|x| !(1.6..=2.6).contains(x)).map(|x| (r.nodes, x)))
            .collect();
        let bad_oracle: Vec<_> =
            report.oracle_rows.iter().filter_map(|r| r.ratio.filter(|&x| x < 3.2).map(|x| (r.nodes, x))).collect();
        if !bad_scan.is_empty() || !bad_oracle.is_empty() {
            return Err(GgError::Invariant(format!("scaling out of band: scan {bad_scan:?}, oracle {bad_oracle:?}")));
        }
        println!("scaling check passed");
    }
    Ok(())
}

fn cmd_ablate(a: AblateArgs, seed: u64) -> Result<()> {
    let d = AblationConfig::default();
    let cfg = AblationConfig {
        sizes: a.sizes.unwrap_or(d.sizes),
        d_model: a.d_model.unwrap_or(d.d_model),
        state_dim: a.state_dim.unwrap_or(d.state_dim),
        topology: a.topology.unwrap_or(d.topology),
        repeats: a.repeats.unwrap_or(d.repeats),
        seed,
    };
    let report = ablate_mst(&cfg)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.out {
        emit(Some(p), &report.to_json()?)?;
    }
    Ok(())
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<()> {
    let task = gen_task(a.task, seed, a.nodes, a.d_model, a.state_dim)?;
    let cfg =
        TrainConfig { steps: a.steps, learning_rate: a.lr, batch: a.batch, scan_mode: a.scan_mode, tree: a.tree, seed };
    let init = LayerWeights::random(a.d_model, a.state_dim, &mut harness::rng(seed));
    let metrics_json = |m: &harness::Metrics, c: &TrainConfig| {
        let mut v = json!({
            "config": c,
            "initial_loss": m.initial_loss(),
            "final_loss": m.final_loss(),
            "final_train_mse": m.final_train_mse,
            "final_validation_mse": m.final_validation_mse,
            "loss_trace": m.loss_trace,
        });
        if a.timings {
            v["step_ms"] = json!(m.step_ms);
        }
        v
    };
    let (m, _) = train_from(&task, &cfg, init.clone())?;
    println!(
        "model: loss {:.6e} -> {:.6e} ({:.3}x), validation mse {:.6e}",
        m.initial_loss(),
        m.final_loss(),
        m.final_loss() / m.initial_loss(),
        m.final_validation_mse
    );
    let mut doc = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "seed": seed,
        "task": { "kind": a.task, "nodes": a.nodes, "d_model": a.d_model, "state_dim": a.state_dim },
        "model": metrics_json(&m, &cfg),
    });
    if a.baseline {
        let bcfg = cfg.baseline();
        let (b, _) = train_from(&task, &bcfg, init)?;
        println!(
            "baseline: loss {:.6e} -> {:.6e} ({:.3}x), validation mse {:.6e}",
            b.initial_loss(),
            b.final_loss(),
            b.final_loss() / b.initial_loss(),
            b.final_validation_mse
        );
        let wins = m.final_validation_mse < b.final_validation_mse;
        println!("model beats baseline: {wins}");
        doc["baseline"] = metrics_json(&b, &bcfg);
        doc["model_beats_baseline"] = json!(wins);
    }
    if let Some(p) = &a.out {
        emit(Some(p), &json_text(&doc)?)?;
    }
    Ok(())
}

fn cmd_selftest(a: SelftestArgs, seed: u64) -> Result<()> {
    let report = selftest(seed)?;
    print!("{}", report.summary());
    if let Some(p) = &a.out {
        let doc = json!({ "schema_version": REPORT_SCHEMA_VERSION, "report": report });
        emit(Some(p), &json_text(&doc)?)?;
    }
    if !report.all_passed() {
        return Err(GgError::Invariant(format!(
            "{} of {} invariant groups failed",
            report.groups.len() - report.passed(),
            report.groups.len()
        )));
    }
    Ok(())
}
