use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{rng, trees::random_tree_pairs};
use crate::error::{contract, Result};
use crate::graph::FeatureSet;
use crate::layer::{compute_selective_params, discretize, output_map, LayerWeights};
use crate::matrix::Matrix;
use crate::mst::RootedTree;
use crate::scan::{scan_dense_oracle, PathConvention};

pub const TRAIN_SAMPLES: usize = 16;
pub const VALIDATION_SAMPLES: usize = 8;
/// Noise added along each hidden edge, relative to the unit-variance root.
pub const DIFFUSION_STEP: f64 = 0.35;
pub const TEACHER_NORM_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Targets are the teacher layer's dense-oracle scan over a hidden tree
    /// along which the inputs were diffused.
    TreeDiffusion,
    /// Targets are the inputs shifted `lag` positions along the sequence.
    ChainCopy { lag: usize },
}

impl std::str::FromStr for TaskKind {
    type Err = crate::error::GgError;

    /// `tree_diffusion` or `chain_copy[:LAG]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || crate::error::GgError::InvalidConfig(format!("unknown task '{s}'"));
        match s.split_once(':') {
            None if s == "tree_diffusion" => Ok(Self::TreeDiffusion),
            None if s == "chain_copy" => Ok(Self::ChainCopy { lag: 1 }),
            Some(("chain_copy", lag)) => Ok(Self::ChainCopy { lag: lag.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

/// One input sequence with its regression target.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub inputs: FeatureSet,
    pub targets: Matrix<f64>,
    /// The tree the targets were generated on, if any.
    pub hidden_tree: Option<RootedTree>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticTask {
    pub seed: u64,
    pub nodes: usize,
    pub d_model: usize,
    pub state_dim: usize,
    pub kind: TaskKind,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub teacher: Option<LayerWeights>,
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Teacher output on a known tree: selective parameters, dense-oracle
/// scan, output map.
pub fn teacher_targets(x: &FeatureSet, teacher: &LayerWeights, tree: &RootedTree) -> Result<Matrix<f64>> {
    let sel = compute_selective_params(x, teacher)?;
    let params = discretize(&teacher.a_log, &sel.delta, &sel.b_in, x, &teacher.w_x)?;
    let h = scan_dense_oracle(tree, &params, PathConvention::EdgeCount)?;
    output_map(x, teacher, &sel.c_out, &h, TEACHER_NORM_EPSILON)
}

fn diffusion_sample(l: usize, d: usize, teacher: &LayerWeights, rng: &mut impl Rng) -> Result<Sample> {
    let pairs = random_tree_pairs(l, rng);
    let tree = RootedTree::from_pairs(l, &pairs, 0)?;
    let mut x = Matrix::zeros(l, d);
    for &v in tree.order() {
        let p = tree.parent()[v];
        for c in 0..d {
            let base = if v == tree.root() { 0.0 } else { x.get(p, c) };
            let step = if v == tree.root() { 1.0 } else { DIFFUSION_STEP };
            x.set(v, c, base + step * normal(rng));
        }
    }
    let inputs = FeatureSet::new(x)?;
    let targets = teacher_targets(&inputs, teacher, &tree)?;
    Ok(Sample { inputs, targets, hidden_tree: Some(tree) })
}

fn copy_sample(l: usize, d: usize, lag: usize, rng: &mut impl Rng) -> Result<Sample> {
    let x = Matrix::from_fn(l, d, |_, _| normal(rng));
    let targets = Matrix::from_fn(l, d, |i, c| if i >= lag { x.get(i - lag, c) } else { 0.0 });
    Ok(Sample { inputs: FeatureSet::new(x)?, targets, hidden_tree: None })
}

type SampleFn = Box<dyn Fn(&mut ChaCha8Rng) -> Result<Sample>>;

/// Tree-diffusion task with the default sample counts.
pub fn gen_tree_task(seed: u64, nodes: usize, d_model: usize, state_dim: usize) -> Result<SyntheticTask> {
    gen_task(TaskKind::TreeDiffusion, seed, nodes, d_model, state_dim)
}

pub fn gen_task(kind: TaskKind, seed: u64, nodes: usize, d_model: usize, state_dim: usize) -> Result<SyntheticTask> {
    contract!(nodes >= 1 && d_model >= 1 && state_dim >= 1, "task sizes must be at least 1");
    let mut r = rng(seed);
    let (teacher, make): (Option<LayerWeights>, SampleFn) = match kind {
        TaskKind::TreeDiffusion => {
            let mut t = LayerWeights::random(d_model, state_dim, &mut r);
            t.d_skip.fill(0.0);
            let t2 = t.clone();
            (Some(t), Box::new(move |r| diffusion_sample(nodes, d_model, &t2, r)))
        }
        TaskKind::ChainCopy { lag } => (None, Box::new(move |r| copy_sample(nodes, d_model, lag, r))),
    };
    let train = (0..TRAIN_SAMPLES).map(|_| make(&mut r)).collect::<Result<_>>()?;
    let validation = (0..VALIDATION_SAMPLES).map(|_| make(&mut r)).collect::<Result<_>>()?;
    Ok(SyntheticTask { seed, nodes, d_model, state_dim, kind, train, validation, teacher })
}
