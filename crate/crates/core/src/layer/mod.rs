//! The full layer: graph, spanning tree, selective parameters, tree scan and
//! the normalized output map.

mod weights;

use std::time::{Duration, Instant};

use num_traits::Float;

pub use weights::{LayerConfig, LayerWeights};

use crate::error::{contract, Result};
use crate::exec::Exec;
use crate::graph::{build_candidate_edges_with, weigh_edges_with, FeatureSet, WeightedEdge, DEFAULT_DENSE_CAP};
use crate::matrix::Matrix;
use crate::mst::{root_tree, RootedTree, SpanningTree};
use crate::scan::{scan, scan_backward, HiddenStates, PathConvention, ScanMode, ScanParams};

pub const DELTA_MIN: f64 = 1e-4;
pub const DELTA_MAX: f64 = 10.0;
/// Bounds on `delta * softplus(A_log)`; they keep every transition strictly
/// inside `(0, 1)`.
pub const DECAY_MIN: f64 = 1.0 / (1u64 << 40) as f64;
pub const DECAY_MAX: f64 = 700.0;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Input-dependent step sizes and projections.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectiveParams {
    pub delta: Vec<f64>,
    pub b_in: Matrix<f64>,
    pub c_out: Matrix<f64>,
}

/// `delta_i = clamp(softplus(<w_delta, x_i> + bias), DELTA_MIN, DELTA_MAX)`,
/// `B_in_i = W_B x_i`, `C_i = W_C x_i`.
pub fn compute_selective_params(x: &FeatureSet, w: &LayerWeights) -> Result<SelectiveParams> {
    contract!(x.dim() == w.d_model(), "features have D = {} but weights expect {}", x.dim(), w.d_model());
    w.validate()?;
    let (l, n) = (x.len(), w.state_dim());
    let delta =
        (0..l).map(|i| softplus(dot(&w.w_delta, x.row(i)) + w.bias_delta).clamp(DELTA_MIN, DELTA_MAX)).collect();
    let b_in = Matrix::from_fn(l, n, |i, k| dot(w.w_b.row(k), x.row(i)));
    let c_out = Matrix::from_fn(l, n, |i, k| dot(w.w_c.row(k), x.row(i)));
    Ok(SelectiveParams { delta, b_in, c_out })
}

/// Zero-order hold for the transitions, Euler for the input:
/// `a_in = exp(-delta_i softplus(A_log_n))`, `u_in = delta_i B_in_in <w_x, x_i>`.
pub fn discretize(
    a_log: &[f64],
    delta: &[f64],
    b_in: &Matrix<f64>,
    x: &FeatureSet,
    w_x: &[f64],
) -> Result<ScanParams<f64>> {
    let (l, n) = (x.len(), a_log.len());
    contract!(delta.len() == l, "delta has {} entries for L = {l}", delta.len());
    contract!(b_in.shape() == (l, n), "B_in is {:?}, expected ({l}, {n})", b_in.shape());
    contract!(w_x.len() == x.dim(), "w_x has {} entries for D = {}", w_x.len(), x.dim());
    contract!(delta.iter().all(|&d| d > 0.0 && d.is_finite()), "delta must be positive and finite");
    let sp: Vec<f64> = a_log.iter().map(|&v| softplus(v)).collect();
    let a = Matrix::from_fn(l, n, |i, k| (-(delta[i] * sp[k]).clamp(DECAY_MIN, DECAY_MAX)).exp());
    let s: Vec<f64> = (0..l).map(|i| dot(w_x, x.row(i))).collect();
    let u = Matrix::from_fn(l, n, |i, k| delta[i] * b_in.get(i, k) * s[i]);
    ScanParams::new(a, u)
}

/// `h / sqrt(mean(h^2) + eps)`.
pub fn rms_normalize(h: &[f64], epsilon: f64) -> Vec<f64> {
    let q = rms_scale(h, epsilon);
    h.iter().map(|v| v * q).collect()
}

fn rms_scale(h: &[f64], epsilon: f64) -> f64 {
    let ms = h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64;
    1.0 / (ms + epsilon).sqrt()
}

/// Eq.-1 style recurrence over node order: `h_0 = u_0`, `h_n = a_n h_{n-1} + u_n`.
pub fn sequential_scan_1d<T: Float>(params: &ScanParams<T>) -> HiddenStates<T> {
    let (a, u) = (params.a(), params.u());
    let mut h = u.clone();
    for i in 1..params.nodes() {
        for c in 0..params.state_dim() {
            let v = a.get(i, c) * h.get(i - 1, c) + u.get(i, c);
            h.set(i, c, v);
        }
    }
    h
}

/// Scan and head settings once the tree is fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadConfig {
    pub scan_mode: ScanMode,
    pub path_convention: PathConvention,
    pub norm_epsilon: f64,
}

impl From<&LayerConfig> for HeadConfig {
    fn from(c: &LayerConfig) -> Self {
        Self { scan_mode: c.scan_mode, path_convention: c.path_convention, norm_epsilon: c.norm_epsilon }
    }
}

/// Wall time per pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTimes {
    pub graph: Duration,
    pub mst: Duration,
    pub scan: Duration,
    pub total: Duration,
}

/// Everything computed by one forward pass.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    pub edges: Vec<WeightedEdge>,
    pub tree: SpanningTree,
    pub rooted: RootedTree,
    pub selective: SelectiveParams,
    pub params: ScanParams<f64>,
    pub h: HiddenStates<f64>,
    pub y: Matrix<f64>,
    pub times: StageTimes,
}

pub fn layer_forward(x: &FeatureSet, w: &LayerWeights, cfg: &LayerConfig) -> Result<Matrix<f64>> {
    Ok(layer_forward_traced(x, w, cfg, Exec::Sequential)?.y)
}

pub fn layer_forward_traced(x: &FeatureSet, w: &LayerWeights, cfg: &LayerConfig, exec: Exec) -> Result<LayerTrace> {
    cfg.validate()?;
    w.validate()?;
    let start = Instant::now();
    let edges = candidate_graph(x, cfg, exec)?;
    let graph = start.elapsed();
    let t = Instant::now();
    let (tree, rooted) = spanning_tree(x.len(), &edges, cfg)?;
    let mst = t.elapsed();
    let t = Instant::now();
    let head = head_forward(x, w, &rooted, &HeadConfig::from(cfg), exec)?;
    let scan = t.elapsed();
    Ok(LayerTrace {
        edges,
        tree,
        rooted,
        selective: head.selective,
        params: head.params,
        h: head.h,
        y: head.y,
        times: StageTimes { graph, mst, scan, total: start.elapsed() },
    })
}

/// Weighted candidate edges of the input features.
pub fn candidate_graph(x: &FeatureSet, cfg: &LayerConfig, exec: Exec) -> Result<Vec<WeightedEdge>> {
    if x.len() < 2 {
        return Ok(Vec::new());
    }
    let pairs = build_candidate_edges_with(x, cfg.topology, DEFAULT_DENSE_CAP, exec)?;
    weigh_edges_with(x, &pairs, exec)
}

/// Spanning tree of the candidate graph, rooted by the configured policy.
pub fn spanning_tree(nodes: usize, edges: &[WeightedEdge], cfg: &LayerConfig) -> Result<(SpanningTree, RootedTree)> {
    let tree = cfg.mst_algorithm.run(edges, nodes)?;
    let rooted = root_tree(&tree, cfg.root_policy.pick(&tree))?;
    Ok((tree, rooted))
}

/// Forward intermediates on a fixed tree.
#[derive(Clone, Debug)]
pub struct HeadTrace {
    pub selective: SelectiveParams,
    pub params: ScanParams<f64>,
    pub h: HiddenStates<f64>,
    pub y: Matrix<f64>,
}

/// Selective parameters, scan on `tree`, and the output map.
pub fn head_forward(
    x: &FeatureSet,
    w: &LayerWeights,
    tree: &RootedTree,
    cfg: &HeadConfig,
    exec: Exec,
) -> Result<HeadTrace> {
    contract!(tree.len() == x.len(), "tree has {} nodes for L = {}", tree.len(), x.len());
    let selective = compute_selective_params(x, w)?;
    let params = discretize(&w.a_log, &selective.delta, &selective.b_in, x, &w.w_x)?;
    let h = scan(tree, &params, cfg.scan_mode, cfg.path_convention, exec)?;
    let y = output_map(x, w, &selective.c_out, &h, cfg.norm_epsilon)?;
    Ok(HeadTrace { selective, params, h, y })
}

/// `y_i = out_proj^T (C_i * rms(h_i)) + D_skip * x_i`.
pub fn output_map(
    x: &FeatureSet,
    w: &LayerWeights,
    c_out: &Matrix<f64>,
    h: &HiddenStates<f64>,
    norm_epsilon: f64,
) -> Result<Matrix<f64>> {
    let (l, n, d) = (x.len(), w.state_dim(), w.d_model());
    contract!(h.shape() == (l, n), "h is {:?}, expected ({l}, {n})", h.shape());
    contract!(c_out.shape() == (l, n), "C is {:?}, expected ({l}, {n})", c_out.shape());
    let mut y = Matrix::zeros(l, d);
    for i in 0..l {
        let r = rms_normalize(h.row(i), norm_epsilon);
        let yi = y.row_mut(i);
        for (k, rk) in r.iter().enumerate() {
            let m = c_out.get(i, k) * rk;
            for (yd, &o) in yi.iter_mut().zip(w.out_proj.row(k)) {
                *yd += o * m;
            }
        }
        for ((yd, &s), &xd) in yi.iter_mut().zip(&w.d_skip).zip(x.row(i)) {
            *yd += s * xd;
        }
    }
    Ok(y)
}

/// Gradients of a scalar loss with respect to every weight, given
/// `grad_y = dLoss/dy`. The tree is held fixed.
pub fn head_backward(
    x: &FeatureSet,
    w: &LayerWeights,
    tree: &RootedTree,
    cfg: &HeadConfig,
    trace: &HeadTrace,
    grad_y: &Matrix<f64>,
    exec: Exec,
) -> Result<LayerWeights> {
    let (l, n, d) = (x.len(), w.state_dim(), w.d_model());
    contract!(grad_y.shape() == (l, d), "grad_y is {:?}, expected ({l}, {d})", grad_y.shape());
    let SelectiveParams { delta, b_in, c_out } = &trace.selective;
    let (a, h) = (trace.params.a(), &trace.h);
    let mut g = LayerWeights::zeros(d, n);

    // Output map and norm.
    let mut grad_h = Matrix::zeros(l, n);
    for i in 0..l {
        let gy = grad_y.row(i);
        let xi = x.row(i);
        for dd in 0..d {
            g.d_skip[dd] += gy[dd] * xi[dd];
        }
        let hi = h.row(i);
        let q = rms_scale(hi, cfg.norm_epsilon);
        let mut g_r = vec![0.0; n];
        for k in 0..n {
            let r = hi[k] * q;
            let m = c_out.get(i, k) * r;
            let g_m = dot(w.out_proj.row(k), gy);
            for (o, &gyd) in g.out_proj.row_mut(k).iter_mut().zip(gy) {
                *o += m * gyd;
            }
            let g_c = g_m * r;
            for (wc, &xd) in g.w_c.row_mut(k).iter_mut().zip(xi) {
                *wc += g_c * xd;
            }
            g_r[k] = g_m * c_out.get(i, k);
        }
        let hg = dot(hi, &g_r);
        let q3 = q * q * q / n as f64;
        for k in 0..n {
            grad_h.set(i, k, q * g_r[k] - q3 * hi[k] * hg);
        }
    }

    let gb = scan_backward(tree, &trace.params, &grad_h, cfg.scan_mode, cfg.path_convention, exec)?;

    // Discretization and selective projections.
    let sp: Vec<f64> = w.a_log.iter().map(|&v| softplus(v)).collect();
    let sg: Vec<f64> = w.a_log.iter().map(|&v| sigmoid(v)).collect();
    for i in 0..l {
        let xi = x.row(i);
        let s = dot(&w.w_x, xi);
        let mut g_delta = 0.0;
        let mut g_s = 0.0;
        for k in 0..n {
            let du = gb.d_u.get(i, k);
            let bik = b_in.get(i, k);
            g_delta += du * bik * s;
            g_s += du * delta[i] * bik;
            let g_bin = du * delta[i] * s;
            for (wb, &xd) in g.w_b.row_mut(k).iter_mut().zip(xi) {
                *wb += g_bin * xd;
            }
            let e = delta[i] * sp[k];
            if e > DECAY_MIN && e < DECAY_MAX {
                // da/de = -a
                let g_e = -gb.d_a.get(i, k) * a.get(i, k);
                g_delta += g_e * sp[k];
                g.a_log[k] += g_e * delta[i] * sg[k];
            }
        }
        for (wx, &xd) in g.w_x.iter_mut().zip(xi) {
            *wx += g_s * xd;
        }
        let z = dot(&w.w_delta, xi) + w.bias_delta;
        let raw = softplus(z);
        if raw > DELTA_MIN && raw < DELTA_MAX {
            let g_z = g_delta * sigmoid(z);
            g.bias_delta += g_z;
            for (wd, &xd) in g.w_delta.iter_mut().zip(xi) {
                *wd += g_z * xd;
            }
        }
    }
    Ok(g)
}

/// Mean squared error over all entries and its gradient.
pub fn mse(y: &Matrix<f64>, target: &Matrix<f64>) -> Result<(f64, Matrix<f64>)> {
    contract!(y.shape() == target.shape(), "prediction {:?} vs target {:?}", y.shape(), target.shape());
    let count = y.as_slice().len() as f64;
    let diff: Vec<f64> = y.as_slice().iter().zip(target.as_slice()).map(|(a, b)| a - b).collect();
    let loss = diff.iter().map(|v| v * v).sum::<f64>() / count;
    let grad = Matrix::from_vec(y.rows(), y.cols(), diff.iter().map(|v| 2.0 * v / count).collect())?;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn softplus_of_zero() {
        let x = FeatureSet::new(Matrix::zeros(1, 3)).unwrap();
        let w = LayerWeights::zeros(3, 2);
        let sel = compute_selective_params(&x, &w).unwrap();
        assert!((sel.delta[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((softplus(50.0) - 50.0).abs() < 1e-15);
        assert!((sigmoid(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn half_life_transition() {
        // softplus(A_log) = 1 and delta = ln 2 give a = 1/2
        let a_log = [(1f64.exp() - 1.0).ln()];
        let x = FeatureSet::new(Matrix::filled(1, 1, 1.0)).unwrap();
        let b_in = Matrix::filled(1, 1, 3.0);
        let p = discretize(&a_log, &[std::f64::consts::LN_2], &b_in, &x, &[2.0]).unwrap();
        assert!((p.a().get(0, 0) - 0.5).abs() < 1e-15);
        assert!((p.u().get(0, 0) - std::f64::consts::LN_2 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn tiny_delta_freezes_state() {
        let x = FeatureSet::new(Matrix::filled(1, 1, 1.0)).unwrap();
        let p = discretize(&[0.0], &[1e-12], &Matrix::filled(1, 1, 1.0), &x, &[1.0]).unwrap();
        assert!(p.a().get(0, 0) < 1.0 && p.a().get(0, 0) > 0.999_999);
        assert!(p.u().get(0, 0).abs() < 1e-11);
        assert!(discretize(&[0.0], &[0.0], &Matrix::filled(1, 1, 1.0), &x, &[1.0]).is_err());
    }

    #[test]
    fn rms_cases() {
        assert_eq!(rms_normalize(&[0.0, 0.0], 1e-6), vec![0.0, 0.0]);
        let r = rms_normalize(&[3.0; 4], 1e-300);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn sequential_hand_unrolled() {
        let p = ScanParams::new(Matrix::filled(3, 1, 0.5), Matrix::filled(3, 1, 1.0)).unwrap();
        assert_eq!(sequential_scan_1d(&p).as_slice(), &[1.0, 1.5, 1.75]);
        let p = ScanParams::new(Matrix::zeros(3, 2), Matrix::from_fn(3, 2, |i, j| (i + j) as f64)).unwrap();
        assert_eq!(sequential_scan_1d(&p), *p.u());
    }

    #[test]
    fn single_node_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = LayerWeights::random(4, 3, &mut rng);
        let x = FeatureSet::new(Matrix::from_fn(1, 4, |_, j| j as f64 - 1.5)).unwrap();
        let cfg = LayerConfig::default();
        let tr = layer_forward_traced(&x, &w, &cfg, Exec::Sequential).unwrap();
        assert!(tr.edges.is_empty());
        assert_eq!(tr.h, *tr.params.u());
        let sel = compute_selective_params(&x, &w).unwrap();
        let r = rms_normalize(tr.params.u().row(0), cfg.norm_epsilon);
        for dd in 0..4 {
            let mut want = w.d_skip[dd] * x.row(0)[dd];
            for k in 0..3 {
                want += w.out_proj.get(k, dd) * sel.c_out.get(0, k) * r[k];
            }
            assert!((tr.y.get(0, dd) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_gradient() {
        let y = Matrix::from_vec(1, 2, vec![1.0, 3.0]).unwrap();
        let t = Matrix::from_vec(1, 2, vec![0.0, 1.0]).unwrap();
        let (l, g) = mse(&y, &t).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.as_slice(), &[1.0, 2.0]);
    }
}
