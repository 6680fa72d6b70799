#![allow(clippy::needless_range_loop)]

use ggssm::exec::Exec;
use ggssm::graph::FeatureSet;
use ggssm::harness::{gen_tree_task, train_toy, TrainConfig, TreeShape};
use ggssm::layer::{
    compute_selective_params, discretize, head_backward, head_forward, layer_forward, layer_forward_traced, mse,
    rms_normalize, HeadConfig, LayerConfig, LayerWeights,
};
use ggssm::matrix::Matrix;
use ggssm::scan::{scan_dense_oracle, PathConvention, ScanMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn features(l: usize, d: usize, r: &mut impl Rng) -> FeatureSet {
    FeatureSet::new(Matrix::from_fn(l, d, |_, _| r.random_range(-1.0..1.0))).unwrap()
}

fn softplus(x: f64) -> f64 {
    (1.0 + x.exp()).ln()
}

#[test]
fn selective_params_match_direct_products() {
    let mut r = rng(1);
    let (l, d, n) = (9, 5, 3);
    let x = features(l, d, &mut r);
    let mut w = LayerWeights::random(d, n, &mut r);
    w.bias_delta = 0.3;
    let sel = compute_selective_params(&x, &w).unwrap();
    for i in 0..l {
        let mut z = w.bias_delta;
        for c in 0..d {
            z += w.w_delta[c] * x.row(i)[c];
        }
        assert!((sel.delta[i] - softplus(z).clamp(1e-4, 10.0)).abs() < 1e-14);
        for k in 0..n {
            let (mut b, mut cc) = (0.0, 0.0);
            for c in 0..d {
                b += w.w_b.get(k, c) * x.row(i)[c];
                cc += w.w_c.get(k, c) * x.row(i)[c];
            }
            assert!((sel.b_in.get(i, k) - b).abs() < 1e-14);
            assert!((sel.c_out.get(i, k) - cc).abs() < 1e-14);
        }
    }
}

#[test]
fn discretized_params_match_hand_recomputation() {
    let mut r = rng(2);
    let (l, d, n) = (7, 3, 4);
    let x = features(l, d, &mut r);
    let w = LayerWeights::random(d, n, &mut r);
    let sel = compute_selective_params(&x, &w).unwrap();
    let p = discretize(&w.a_log, &sel.delta, &sel.b_in, &x, &w.w_x).unwrap();
    for i in 0..l {
        let s: f64 = (0..d).map(|c| w.w_x[c] * x.row(i)[c]).sum();
        for k in 0..n {
            let a = p.a().get(i, k);
            assert!(a > 0.0 && a < 1.0);
            assert!((a - (-sel.delta[i] * softplus(w.a_log[k])).exp()).abs() < 1e-14);
            let u = sel.delta[i] * sel.b_in.get(i, k) * s;
            assert!((p.u().get(i, k) - u).abs() < 1e-14);
        }
    }
}

#[test]
fn half_step_gives_half_transition() {
    // delta = ln 2 and softplus(A_log) = 1  =>  a = 1/2
    let x = FeatureSet::from_rows(&[vec![0.0]]).unwrap();
    let a_log = [(1f64.exp() - 1.0).ln()];
    let p = discretize(&a_log, &[2f64.ln()], &Matrix::filled(1, 1, 1.0), &x, &[1.0]).unwrap();
    assert!((p.a().get(0, 0) - 0.5).abs() < 1e-15);
}

#[test]
fn normalized_rms_is_one_up_to_epsilon() {
    let mut r = rng(3);
    for _ in 0..50 {
        let h: Vec<f64> = (0..r.random_range(1..20)).map(|_| r.random_range(-3.0..3.0)).collect();
        let eps = 1e-6;
        let out = rms_normalize(&h, eps);
        let ms: f64 = h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64;
        let out_rms = (out.iter().map(|v| v * v).sum::<f64>() / h.len() as f64).sqrt();
        assert!((out_rms - (ms / (ms + eps)).sqrt()).abs() < 1e-12);
        assert!((out_rms - 1.0).abs() < eps / ms);
    }
}

#[test]
fn pipeline_hidden_states_equal_dense_oracle() {
    let mut r = rng(4);
    let x = features(32, 4, &mut r);
    let w = LayerWeights::random(4, 3, &mut r);
    let cfg = LayerConfig::default();
    assert_eq!(cfg.scan_mode, ScanMode::Full);
    let trace = layer_forward_traced(&x, &w, &cfg, Exec::Sequential).unwrap();
    let dense = scan_dense_oracle(&trace.rooted, &trace.params, PathConvention::EdgeCount).unwrap();
    let d = trace.h.as_slice().iter().zip(dense.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-12 * dense.max_abs());
    assert_eq!(trace.tree.edges().len(), 31);
}

#[test]
fn single_node_layer_is_closed_form() {
    let mut r = rng(5);
    let x = features(1, 3, &mut r);
    let w = LayerWeights::random(3, 2, &mut r);
    let cfg = LayerConfig::default();
    let y = layer_forward(&x, &w, &cfg).unwrap();
    let sel = compute_selective_params(&x, &w).unwrap();
    let p = discretize(&w.a_log, &sel.delta, &sel.b_in, &x, &w.w_x).unwrap();
    let norm = rms_normalize(p.u().row(0), cfg.norm_epsilon);
    for c in 0..3 {
        let mut want = w.d_skip[c] * x.row(0)[c];
        for k in 0..2 {
            want += w.out_proj.get(k, c) * sel.c_out.get(0, k) * norm[k];
        }
        assert!((y.get(0, c) - want).abs() < 1e-14);
    }
}

#[test]
fn small_gradient_step_lowers_loss() {
    let mut r = rng(6);
    let mut lowered = 0;
    for t in 0..100 {
        let l = r.random_range(2..24);
        let (d, n) = (r.random_range(1..5), r.random_range(1..5));
        let tree = TreeShape::ALL[t % 3].rooted(l, &mut r).unwrap();
        let x = features(l, d, &mut r);
        let w = LayerWeights::random(d, n, &mut r);
        let target = Matrix::from_fn(l, d, |_, _| r.random_range(-1.0..1.0));
        let cfg =
            HeadConfig { scan_mode: ScanMode::Full, path_convention: PathConvention::EdgeCount, norm_epsilon: 1e-6 };
        let trace = head_forward(&x, &w, &tree, &cfg, Exec::Sequential).unwrap();
        let (loss, g_y) = mse(&trace.y, &target).unwrap();
        let g = head_backward(&x, &w, &tree, &cfg, &trace, &g_y, Exec::Sequential).unwrap();
        let mut stepped = w.clone();
        stepped.add_scaled(-1e-4, &g);
        let after = mse(&head_forward(&x, &stepped, &tree, &cfg, Exec::Sequential).unwrap().y, &target).unwrap().0;
        lowered += usize::from(after < loss);
    }
    assert!(lowered >= 95, "{lowered}/100");
}

#[test]
fn training_is_deterministic() {
    let task = gen_tree_task(9, 16, 3, 2).unwrap();
    let cfg = TrainConfig { steps: 30, seed: 4, ..Default::default() };
    let a = train_toy(&task, &cfg).unwrap();
    let b = train_toy(&task, &cfg).unwrap();
    assert_eq!(a.loss_trace, b.loss_trace);
    assert_eq!(a.final_validation_mse, b.final_validation_mse);
}
