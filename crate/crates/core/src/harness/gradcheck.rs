use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{rng, TreeShape};
use crate::error::Result;
use crate::exec::Exec;
use crate::graph::FeatureSet;
use crate::layer::{head_backward, head_forward, mse, HeadConfig, LayerWeights};
use crate::matrix::Matrix;
use crate::mst::RootedTree;
use crate::scan::{scan, scan_backward, PathConvention, ScanMode, ScanParams};

pub const FD_STEP: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute terms.
pub const GRADCHECK_FLOOR: f64 = 1.0;
/// Head instances keep every hidden-state row at least this far from zero
/// in RMS. The normalization's third derivative grows like `|h|^-3`, which
/// makes central differences inaccurate near `h = 0`.
pub const MIN_HIDDEN_RMS: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub shape: TreeShape,
    pub nodes: usize,
    pub state_dim: usize,
    pub d_model: usize,
    pub scan_mode: ScanMode,
    pub path_convention: PathConvention,
    pub scan_error: f64,
    pub head_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub passed: bool,
    pub trials: Vec<TrialResult>,
}

impl GradcheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter(|t| t.scan_error.max(t.head_error) >= self.tolerance)
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRADCHECK_FLOOR)
}

fn dot(a: &Matrix<f64>, b: &Matrix<f64>) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

/// Max relative error of the scan gradients for the loss `<g, h>`.
pub fn check_scan(
    tree: &RootedTree,
    params: &ScanParams<f64>,
    g: &Matrix<f64>,
    mode: ScanMode,
    conv: PathConvention,
) -> Result<f64> {
    let grads = scan_backward(tree, params, g, mode, conv, Exec::Sequential)?;
    let mut worst = 0.0f64;
    for (which, analytic) in [&grads.d_a, &grads.d_u].into_iter().enumerate() {
        for (idx, &an) in analytic.as_slice().iter().enumerate() {
            let loss_at = |delta: f64| -> Result<f64> {
                let (mut a, mut u) = params.clone().into_parts();
                let m = if which == 0 { &mut a } else { &mut u };
                m.as_mut_slice()[idx] += delta;
                Ok(dot(&scan(tree, &ScanParams::new(a, u)?, mode, conv, Exec::Sequential)?, g))
            };
            let numeric = (loss_at(FD_STEP)? - loss_at(-FD_STEP)?) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(an, numeric));
        }
    }
    Ok(worst)
}

/// Max relative error of every weight gradient for the loss `mse(y, target)`.
pub fn check_head(
    x: &FeatureSet,
    w: &LayerWeights,
    tree: &RootedTree,
    cfg: &HeadConfig,
    target: &Matrix<f64>,
) -> Result<f64> {
    let trace = head_forward(x, w, tree, cfg, Exec::Sequential)?;
    let (_, g_y) = mse(&trace.y, target)?;
    let grads = head_backward(x, w, tree, cfg, &trace, &g_y, Exec::Sequential)?;
    let mut probe = w.clone();
    let mut worst = 0.0f64;
    for (t, analytic) in grads.slices().iter().enumerate() {
        for (idx, &an) in analytic.iter().enumerate() {
            let x0 = probe.slices()[t][idx];
            let mut loss_at = |v: f64| -> Result<f64> {
                probe.slices_mut()[t][idx] = v;
                let y = head_forward(x, &probe, tree, cfg, Exec::Sequential)?.y;
                Ok(mse(&y, target)?.0)
            };
            let numeric = (loss_at(x0 + FD_STEP)? - loss_at(x0 - FD_STEP)?) / (2.0 * FD_STEP);
            probe.slices_mut()[t][idx] = x0;
            worst = worst.max(rel_error(an, numeric));
        }
    }
    Ok(worst)
}

fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut impl Rng) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| r.random_range(lo..hi))
}

/// Compares the analytic scan and head gradients with central differences
/// on `trials` random instances covering every tree shape, scan mode and
/// path convention.
pub fn gradcheck_suite(trials: usize, seed: u64) -> Result<GradcheckReport> {
    let mut r = rng(seed);
    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials {
        let shape = TreeShape::ALL[trial % TreeShape::ALL.len()];
        let scan_mode = if (trial / 3) % 2 == 0 { ScanMode::Full } else { ScanMode::Rooted };
        let path_convention =
            if (trial / 6) % 2 == 0 { PathConvention::EdgeCount } else { PathConvention::InteriorOnly };
        let nodes = r.random_range(2..=12);
        let state_dim = [1, 2, 4][r.random_range(0..3)];
        let d_model = r.random_range(1..=4);
        let tree = shape.rooted(nodes, &mut r)?;

        let params = ScanParams::new(
            random_matrix(nodes, state_dim, 0.05, 0.95, &mut r),
            random_matrix(nodes, state_dim, -1.0, 1.0, &mut r),
        )?;
        let g = random_matrix(nodes, state_dim, -1.0, 1.0, &mut r);
        let scan_error = check_scan(&tree, &params, &g, scan_mode, path_convention)?;

        let cfg = HeadConfig { scan_mode, path_convention, norm_epsilon: 1e-6 };
        let (x, w) = loop {
            let x = FeatureSet::new(random_matrix(nodes, d_model, -1.0, 1.0, &mut r))?;
            let w = LayerWeights::random(d_model, state_dim, &mut r);
            let h = head_forward(&x, &w, &tree, &cfg, Exec::Sequential)?.h;
            if (0..nodes).all(|i| rms(h.row(i)) >= MIN_HIDDEN_RMS) {
                break (x, w);
            }
        };
        let target = random_matrix(nodes, d_model, -1.0, 1.0, &mut r);
        let head_error = check_head(&x, &w, &tree, &cfg, &target)?;

        results.push(TrialResult {
            trial,
            shape,
            nodes,
            state_dim,
            d_model,
            scan_mode,
            path_convention,
            scan_error,
            head_error,
        });
    }
    let max_rel_error = results.iter().map(|t| t.scan_error.max(t.head_error)).fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        tolerance: GRADCHECK_TOL,
        max_rel_error,
        passed: max_rel_error < GRADCHECK_TOL,
        trials: results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_node_scalar() {
        // h_0 = u_0 + a_0 u_1, so dh_0/da_0 = u_1
        let tree = RootedTree::chain(2, 0).unwrap();
        let params = ScanParams::new(
            Matrix::from_vec(2, 1, vec![0.5, 0.25]).unwrap(),
            Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap(),
        )
        .unwrap();
        let g = Matrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let grads =
            scan_backward(&tree, &params, &g, ScanMode::Full, PathConvention::EdgeCount, Exec::Sequential).unwrap();
        assert_eq!(grads.d_a.get(0, 0), 3.0);
        assert!(check_scan(&tree, &params, &g, ScanMode::Full, PathConvention::EdgeCount).unwrap() < GRADCHECK_TOL);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut r = rng(3);
        let tree = TreeShape::Random.rooted(7, &mut r).unwrap();
        let x = FeatureSet::new(random_matrix(7, 3, -1.0, 1.0, &mut r)).unwrap();
        let w = LayerWeights::random(3, 2, &mut r);
        let cfg =
            HeadConfig { scan_mode: ScanMode::Full, path_convention: PathConvention::EdgeCount, norm_epsilon: 1e-6 };
        let trace = head_forward(&x, &w, &tree, &cfg, Exec::Sequential).unwrap();
        let g = head_backward(&x, &w, &tree, &cfg, &trace, &Matrix::zeros(7, 3), Exec::Sequential).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn small_suite_passes() {
        let report = gradcheck_suite(12, 1).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report, gradcheck_suite(12, 1).unwrap());
        assert_eq!(report.failures().count(), 0);
    }
}
