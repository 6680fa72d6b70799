use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{rng, Sample, SyntheticTask};
use crate::error::{GgError, Result};
use crate::exec::Exec;
use crate::layer::{
    candidate_graph, head_backward, head_forward, mse, spanning_tree, HeadConfig, LayerConfig, LayerWeights,
};
use crate::mst::RootedTree;
use crate::scan::{PathConvention, ScanMode};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

/// Which tree the student scans over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeSource {
    /// Minimum spanning tree of the sample's inputs.
    #[default]
    Mst,
    /// The sequence order `0 - 1 - ... - (L-1)`, rooted at the last node.
    Chain,
}

impl std::str::FromStr for TreeSource {
    type Err = GgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mst" => Ok(Self::Mst),
            "chain" => Ok(Self::Chain),
            _ => Err(GgError::InvalidConfig(format!("unknown tree source '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Training samples per step, taken cyclically.
    pub batch: usize,
    pub scan_mode: ScanMode,
    pub tree: TreeSource,
    /// Seeds the student's initial weights.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { steps: 500, learning_rate: 1e-2, batch: 8, scan_mode: ScanMode::Full, tree: TreeSource::Mst, seed: 0 }
    }
}

impl TrainConfig {
    /// The sequential baseline: same weights, chain tree, one-sided scan.
    pub fn baseline(self) -> Self {
        Self { tree: TreeSource::Chain, scan_mode: ScanMode::Rooted, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(GgError::InvalidConfig("steps must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(GgError::InvalidConfig(format!("bad learning rate {}", self.learning_rate)));
        }
        if self.batch == 0 {
            return Err(GgError::InvalidConfig("batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean batch loss before each update.
    pub loss_trace: Vec<f64>,
    pub final_train_mse: f64,
    pub final_validation_mse: f64,
    pub step_ms: Vec<f64>,
}

impl Metrics {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("at least one step")
    }
}

fn student_tree(s: &Sample, source: TreeSource) -> Result<RootedTree> {
    let l = s.inputs.len();
    match source {
        TreeSource::Chain => RootedTree::chain(l, l - 1),
        TreeSource::Mst => {
            let cfg = LayerConfig::default();
            let edges = candidate_graph(&s.inputs, &cfg, Exec::Sequential)?;
            Ok(spanning_tree(l, &edges, &cfg)?.1)
        }
    }
}

fn mean_mse(w: &LayerWeights, set: &[(Sample, RootedTree)], head: &HeadConfig) -> Result<f64> {
    let mut total = 0.0;
    for (s, tree) in set {
        let y = head_forward(&s.inputs, w, tree, head, Exec::Sequential)?.y;
        total += mse(&y, &s.targets)?.0;
    }
    Ok(total / set.len() as f64)
}

/// Plain gradient descent on the mean squared error. The trees are built
/// once from the inputs and held fixed.
pub fn train_toy(task: &SyntheticTask, cfg: &TrainConfig) -> Result<Metrics> {
    train_from(task, cfg, LayerWeights::random(task.d_model, task.state_dim, &mut rng(cfg.seed))).map(|r| r.0)
}

/// [`train_toy`] from given initial weights; also returns the final weights.
pub fn train_from(task: &SyntheticTask, cfg: &TrainConfig, mut w: LayerWeights) -> Result<(Metrics, LayerWeights)> {
    cfg.validate()?;
    let with_trees = |set: &[Sample]| -> Result<Vec<(Sample, RootedTree)>> {
        set.iter().map(|s| Ok((s.clone(), student_tree(s, cfg.tree)?))).collect()
    };
    let train = with_trees(&task.train)?;
    let validation = with_trees(&task.validation)?;
    let head = HeadConfig {
        scan_mode: cfg.scan_mode,
        path_convention: PathConvention::EdgeCount,
        norm_epsilon: LayerConfig::default().norm_epsilon,
    };
    let batch = cfg.batch.min(train.len());
    let mut loss_trace = Vec::with_capacity(cfg.steps);
    let mut step_ms = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let t = Instant::now();
        let mut grad = LayerWeights::zeros(task.d_model, task.state_dim);
        let mut loss = 0.0;
        for b in 0..batch {
            let (s, tree) = &train[(step * batch + b) % train.len()];
            let trace = head_forward(&s.inputs, &w, tree, &head, Exec::Sequential)?;
            let (l, g_y) = mse(&trace.y, &s.targets)?;
            loss += l;
            let g = head_backward(&s.inputs, &w, tree, &head, &trace, &g_y, Exec::Sequential)?;
            grad.add_scaled(1.0, &g);
        }
        loss /= batch as f64;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(GgError::Diverged { step, loss });
        }
        loss_trace.push(loss);
        w.add_scaled(-cfg.learning_rate / batch as f64, &grad);
        step_ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    let metrics = Metrics {
        loss_trace,
        final_train_mse: mean_mse(&w, &train, &head)?,
        final_validation_mse: mean_mse(&w, &validation, &head)?,
        step_ms,
    };
    Ok((metrics, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen_tree_task;

    #[test]
    fn zero_learning_rate_keeps_loss() {
        let task = gen_tree_task(0, 10, 3, 2).unwrap();
        let cfg = TrainConfig { steps: 4, learning_rate: 0.0, batch: TRAIN_BATCH_ALL, ..Default::default() };
        let m = train_toy(&task, &cfg).unwrap();
        assert!(m.loss_trace.iter().all(|&l| l == m.loss_trace[0]));
    }

    const TRAIN_BATCH_ALL: usize = usize::MAX;

    #[test]
    fn loss_decreases() {
        let task = gen_tree_task(5, 16, 4, 4).unwrap();
        let cfg = TrainConfig { steps: 60, ..Default::default() };
        let m = train_toy(&task, &cfg).unwrap();
        assert!(m.final_loss() < m.initial_loss());
    }

    #[test]
    fn divergence_is_reported() {
        let task = gen_tree_task(5, 16, 4, 4).unwrap();
        let cfg = TrainConfig { steps: 50, learning_rate: 1e4, ..Default::default() };
        assert!(matches!(train_toy(&task, &cfg), Err(GgError::Diverged { .. })));
    }

    #[test]
    fn rejects_bad_config() {
        let task = gen_tree_task(0, 4, 2, 2).unwrap();
        for cfg in [
            TrainConfig { steps: 0, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
            TrainConfig { batch: 0, ..Default::default() },
        ] {
            assert!(matches!(train_toy(&task, &cfg), Err(GgError::InvalidConfig(_))));
        }
    }
}
