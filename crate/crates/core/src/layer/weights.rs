use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, GgError, Result};
use crate::format::{Tensor, TensorBundle};
use crate::graph::CandidateTopology;
use crate::matrix::Matrix;
use crate::mst::{MstAlgorithm, RootPolicy};
use crate::scan::{PathConvention, ScanMode};

/// Trainable parameters of one layer with state size `N` and width `D`.
///
/// `w_b`, `w_c` and `out_proj` are `N x D`. `w_x` mixes the input channels
/// into the scalar that every state channel receives.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub a_log: Vec<f64>,
    pub w_delta: Vec<f64>,
    pub bias_delta: f64,
    pub w_b: Matrix<f64>,
    pub w_c: Matrix<f64>,
    pub w_x: Vec<f64>,
    pub d_skip: Vec<f64>,
    pub out_proj: Matrix<f64>,
}

const NAMES: [&str; 8] = ["A_log", "W_delta", "bias_delta", "W_B", "W_C", "w_x", "D_skip", "out_proj"];

impl LayerWeights {
    pub fn zeros(d_model: usize, n: usize) -> Self {
        Self {
            a_log: vec![0.0; n],
            w_delta: vec![0.0; d_model],
            bias_delta: 0.0,
            w_b: Matrix::zeros(n, d_model),
            w_c: Matrix::zeros(n, d_model),
            w_x: vec![0.0; d_model],
            d_skip: vec![0.0; d_model],
            out_proj: Matrix::zeros(n, d_model),
        }
    }

    /// Gaussian projections scaled by `1/sqrt(fan_in)`; `A_log` spread so
    /// that transitions cover a useful range of memory lengths.
    pub fn random(d_model: usize, n: usize, rng: &mut impl Rng) -> Self {
        let std = Normal::new(0.0, 1.0).expect("unit normal");
        let mut g = |scale: f64| std.sample(rng) * scale;
        let sd = 1.0 / (d_model as f64).sqrt();
        let sn = 1.0 / (n as f64).sqrt();
        Self {
            a_log: (0..n).map(|k| -1.0 + 1.5 * k as f64 / n.max(2) as f64 + g(0.1)).collect(),
            w_delta: (0..d_model).map(|_| g(sd)).collect(),
            bias_delta: 0.0,
            w_b: Matrix::from_fn(n, d_model, |_, _| g(sd)),
            w_c: Matrix::from_fn(n, d_model, |_, _| g(sd)),
            w_x: (0..d_model).map(|_| g(sd)).collect(),
            d_skip: (0..d_model).map(|_| g(0.5)).collect(),
            out_proj: Matrix::from_fn(n, d_model, |_, _| g(sn)),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a_log.len()
    }

    pub fn d_model(&self) -> usize {
        self.w_delta.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.state_dim(), self.d_model());
        contract!(n >= 1 && d >= 1, "layer needs N >= 1 and D >= 1");
        for (name, shape, want) in [
            ("W_B", self.w_b.shape(), (n, d)),
            ("W_C", self.w_c.shape(), (n, d)),
            ("out_proj", self.out_proj.shape(), (n, d)),
            ("w_x", (1, self.w_x.len()), (1, d)),
            ("D_skip", (1, self.d_skip.len()), (1, d)),
        ] {
            contract!(shape == want, "{name} has shape {shape:?}, expected {want:?}");
        }
        if !self.slices().iter().all(|s| s.iter().all(|v| v.is_finite())) {
            return Err(GgError::InvalidInput("layer weights have non-finite entries".into()));
        }
        Ok(())
    }

    /// Every tensor as a flat slice, in manifest order.
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            &self.a_log,
            &self.w_delta,
            std::slice::from_ref(&self.bias_delta),
            self.w_b.as_slice(),
            self.w_c.as_slice(),
            &self.w_x,
            &self.d_skip,
            self.out_proj.as_slice(),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            &mut self.a_log,
            &mut self.w_delta,
            std::slice::from_mut(&mut self.bias_delta),
            self.w_b.as_mut_slice(),
            self.w_c.as_mut_slice(),
            &mut self.w_x,
            &mut self.d_skip,
            self.out_proj.as_mut_slice(),
        ]
    }

    pub fn names() -> [&'static str; 8] {
        NAMES
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in dst.iter_mut().zip(src) {
                *x += c * y;
            }
        }
    }

    pub fn to_bundle(&self) -> TensorBundle {
        let (n, d) = (self.state_dim(), self.d_model());
        let mut b = TensorBundle::default();
        b.push("A_log", Tensor::vector(&self.a_log));
        b.push("W_delta", Tensor::vector(&self.w_delta));
        b.push("bias_delta", Tensor::vector(&[self.bias_delta]));
        b.push("W_B", Tensor::from_matrix(&self.w_b));
        b.push("W_C", Tensor::from_matrix(&self.w_c));
        b.push("w_x", Tensor::vector(&self.w_x));
        b.push("D_skip", Tensor::vector(&self.d_skip));
        b.push("out_proj", Tensor::from_matrix(&self.out_proj));
        debug_assert_eq!(b.manifest()[3].1, vec![n, d]);
        b
    }

    pub fn from_bundle(b: &TensorBundle) -> Result<Self> {
        let vector = |name: &str| -> Result<Vec<f64>> {
            let t = b.get(name)?;
            if t.shape.len() != 1 {
                return Err(GgError::Format(format!("'{name}' must be rank 1, got {:?}", t.shape)));
            }
            Ok(t.data.clone())
        };
        let matrix = |name: &str| -> Result<Matrix<f64>> { b.get(name)?.clone().into_matrix() };
        let bias = vector("bias_delta")?;
        if bias.len() != 1 {
            return Err(GgError::Format("'bias_delta' must hold one value".into()));
        }
        let w = Self {
            a_log: vector("A_log")?,
            w_delta: vector("W_delta")?,
            bias_delta: bias[0],
            w_b: matrix("W_B")?,
            w_c: matrix("W_C")?,
            w_x: vector("w_x")?,
            d_skip: vector("D_skip")?,
            out_proj: matrix("out_proj")?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bundle().to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bundle(&TensorBundle::from_bytes(&std::fs::read(path)?)?)
    }
}

/// Pipeline switches for one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    pub topology: CandidateTopology,
    pub mst_algorithm: MstAlgorithm,
    pub scan_mode: ScanMode,
    pub path_convention: PathConvention,
    pub norm_epsilon: f64,
    pub root_policy: RootPolicy,
}

impl Default for LayerConfig {
    fn default() -> Self {
        Self {
            topology: CandidateTopology::Dense,
            mst_algorithm: MstAlgorithm::Kruskal,
            scan_mode: ScanMode::Full,
            path_convention: PathConvention::EdgeCount,
            norm_epsilon: 1e-6,
            root_policy: RootPolicy::NodeZero,
        }
    }
}

impl LayerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.norm_epsilon > 0.0 && self.norm_epsilon.is_finite()) {
            return Err(GgError::InvalidConfig(format!("norm_epsilon must be positive, got {}", self.norm_epsilon)));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| GgError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
