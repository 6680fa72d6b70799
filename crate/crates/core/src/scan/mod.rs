//! State propagation along a rooted tree.
//!
//! Each node `i` carries a diagonal transition `a_i` and an injection `u_i`.
//! The full scan computes `h_i = sum_j S(j -> i) * u_j` over all nodes, where
//! `S(j -> i)` multiplies the transitions met on the unique tree path. The
//! rooted scan restricts the sum to the subtree of `i`.
//!
//! Both are computed in `O(L N)` by an upward pass
//! `up_i = u_i + a_i * sum_{c child of i} up_c` and, for the full scan, a
//! downward pass that hands every child the contribution of the rest of the
//! tree. Work happens in breadth-first position order, so every pass is a
//! linear sweep over contiguous rows.

mod kernel;
mod oracle;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{contract, GgError, Result};
use crate::exec::{channel_blocks, map_slice, Exec};
use crate::matrix::Matrix;
use crate::mst::RootedTree;

pub use oracle::{path_weight, scan_dense_oracle, scan_dense_oracle_with};

/// Hidden states, one row per node.
pub type HiddenStates<T = f64> = Matrix<T>;

/// Which nodes on a path contribute a transition factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathConvention {
    /// One factor per edge: source excluded, destination included.
    #[default]
    EdgeCount,
    /// Only nodes strictly between source and destination.
    InteriorOnly,
}

impl std::str::FromStr for PathConvention {
    type Err = GgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edge_count" | "edge-count" => Ok(Self::EdgeCount),
            "interior_only" | "interior-only" => Ok(Self::InteriorOnly),
            _ => Err(GgError::InvalidConfig(format!("unknown path convention '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Sum over each node's subtree.
    Rooted,
    /// Sum over every node of the tree.
    #[default]
    Full,
}

impl std::str::FromStr for ScanMode {
    type Err = GgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rooted" => Ok(Self::Rooted),
            "full" => Ok(Self::Full),
            _ => Err(GgError::InvalidConfig(format!("unknown scan mode '{s}'"))),
        }
    }
}

/// Per-node transitions `a` (each in `[0, 1)`) and injections `u`, both `L x N`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanParams<T = f64> {
    a: Matrix<T>,
    u: Matrix<T>,
}

impl<T: Float> ScanParams<T> {
    pub fn new(a: Matrix<T>, u: Matrix<T>) -> Result<Self> {
        contract!(a.shape() == u.shape(), "a is {:?} but u is {:?}", a.shape(), u.shape());
        contract!(a.rows() >= 1 && a.cols() >= 1, "scan params need L >= 1 and N >= 1");
        if !u.all_finite() {
            return Err(GgError::InvalidInput("u has non-finite entries".into()));
        }
        if let Some(bad) = a.as_slice().iter().find(|&&v| !(v >= T::zero() && v < T::one())) {
            return Err(GgError::InvalidInput(format!(
                "transition {} outside [0, 1)",
                bad.to_f64().unwrap_or(f64::NAN)
            )));
        }
        Ok(Self { a, u })
    }

    pub fn nodes(&self) -> usize {
        self.a.rows()
    }

    pub fn state_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }

    pub fn u(&self) -> &Matrix<T> {
        &self.u
    }

    pub fn into_parts(self) -> (Matrix<T>, Matrix<T>) {
        (self.a, self.u)
    }
}

/// Gradients of a scalar loss with respect to `a` and `u`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle<T = f64> {
    pub d_a: Matrix<T>,
    pub d_u: Matrix<T>,
}

fn check_shapes<T: Float>(tree: &RootedTree, params: &ScanParams<T>) -> Result<()> {
    contract!(tree.len() == params.nodes(), "tree has {} nodes but params have {} rows", tree.len(), params.nodes());
    Ok(())
}

/// Rows this far ahead in the order are prefetched during gather and
/// scatter; the order visits rows at random, which defeats the hardware
/// prefetcher once the matrix leaves cache.
const PREFETCH_AHEAD: usize = 16;

#[inline(always)]
fn prefetch<T>(row: &[T]) {
    #[cfg(target_arch = "x86_64")]
    #[allow(unused_unsafe)]
    // SAFETY: prefetching is a hint and never faults, even on bad addresses;
    // the addresses used here are in bounds anyway.
    unsafe {
        use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
        let bytes = std::mem::size_of_val(row);
        let p = row.as_ptr() as *const i8;
        let mut off = 0;
        while off < bytes {
            _mm_prefetch::<_MM_HINT_T0>(p.add(off));
            off += 64;
        }
    }
    #[cfg(not(target_arch = "x86_64"))]
    let _ = row;
}

/// Rows of `m` in breadth-first order, columns `start..start + w`.
fn gather<T: Float>(m: &Matrix<T>, order: &[usize], start: usize, w: usize) -> Vec<T> {
    let mut out = Vec::new();
    gather_into(&mut out, m, order, start, w);
    out
}

fn gather_into<T: Float>(out: &mut Vec<T>, m: &Matrix<T>, order: &[usize], start: usize, w: usize) {
    out.clear();
    out.reserve(order.len() * w);
    for (k, &v) in order.iter().enumerate() {
        if let Some(&ahead) = order.get(k + PREFETCH_AHEAD) {
            prefetch(&m.row(ahead)[start..start + w]);
        }
        out.extend_from_slice(&m.row(v)[start..start + w]);
    }
}

fn scatter<T: Float>(dst: &mut Matrix<T>, src: &[T], order: &[usize], start: usize, w: usize) {
    for (k, &v) in order.iter().enumerate() {
        if let Some(&ahead) = order.get(k + PREFETCH_AHEAD) {
            prefetch(&dst.row(ahead)[start..start + w]);
        }
        dst.row_mut(v)[start..start + w].copy_from_slice(&src[k * w..(k + 1) * w]);
    }
}

/// Runs `f` on column blocks of the gathered inputs and scatters every
/// returned block back to node order. Channels never interact, so the
/// blocking does not change a single bit of the result.
fn blocked<T, const K: usize>(
    exec: Exec,
    tree: &RootedTree,
    inputs: &[&Matrix<T>],
    f: impl Fn(Vec<Vec<T>>, usize) -> [Vec<T>; K] + Sync + Send,
) -> [Matrix<T>; K]
where
    T: Float + Send + Sync,
{
    let (rows, cols) = inputs[0].shape();
    let order = tree.order();
    let blocks = channel_blocks(cols, exec);
    if let [(0, w)] = blocks[..] {
        let res = f(inputs.iter().map(|m| gather(m, order, 0, w)).collect(), w);
        return res.map(|r| {
            let mut m = Matrix::zeros(rows, cols);
            scatter(&mut m, &r, order, 0, w);
            m
        });
    }
    let results =
        map_slice(exec, &blocks, |&(start, w)| f(inputs.iter().map(|m| gather(m, order, start, w)).collect(), w));
    let mut outs: [Matrix<T>; K] = std::array::from_fn(|_| Matrix::zeros(rows, cols));
    for (&(start, w), res) in blocks.iter().zip(&results) {
        for (dst, src) in outs.iter_mut().zip(res) {
            scatter(dst, src, order, start, w);
        }
    }
    outs
}

/// Scratch buffers for the forward scan. Reusing one across calls avoids
/// allocating (and page-faulting) fresh buffers every time.
#[derive(Clone, Debug, Default)]
pub struct ScanWorkspace<T = f64> {
    a: Vec<T>,
    up: Vec<T>,
    out: Vec<T>,
    s: Vec<T>,
    h: Vec<T>,
}

impl<T> ScanWorkspace<T> {
    pub fn new() -> Self {
        Self { a: Vec::new(), up: Vec::new(), out: Vec::new(), s: Vec::new(), h: Vec::new() }
    }
}

/// Forward scan into `h`, gathering only the transitions. A single block
/// writes rows straight into `h`; several blocks run in parallel and are
/// scattered afterwards. Both paths do the same arithmetic.
pub fn scan_into<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    mode: ScanMode,
    conv: PathConvention,
    exec: Exec,
    ws: &mut ScanWorkspace<T>,
    h: &mut HiddenStates<T>,
) -> Result<()> {
    check_shapes(tree, params)?;
    let (rows, cols) = params.a.shape();
    contract!(h.shape() == (rows, cols), "output is {:?}, expected ({rows}, {cols})", h.shape());
    let order = tree.order();
    let blocks = channel_blocks(cols, exec);
    if let [(0, w)] = blocks[..] {
        gather_into(&mut ws.a, &params.a, order, 0, w);
        kernel::forward(tree, ws, &params.u, 0, w, mode, conv, |k, row| {
            if let Some(&ahead) = order.get(k + PREFETCH_AHEAD) {
                prefetch(h.row(ahead));
            }
            h.row_mut(order[k]).copy_from_slice(row);
        });
        return Ok(());
    }
    let results = map_slice(exec, &blocks, |&(start, w)| {
        let mut ws = ScanWorkspace::new();
        gather_into(&mut ws.a, &params.a, order, start, w);
        let mut out = Vec::with_capacity(rows * w);
        kernel::forward(tree, &mut ws, &params.u, start, w, mode, conv, |_, row| out.extend_from_slice(row));
        out
    });
    for (&(start, w), res) in blocks.iter().zip(&results) {
        scatter(h, res, order, start, w);
    }
    Ok(())
}

fn forward<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    mode: ScanMode,
    conv: PathConvention,
    exec: Exec,
) -> Result<HiddenStates<T>> {
    let mut h = Matrix::zeros(params.a.rows(), params.a.cols());
    scan_into(tree, params, mode, conv, exec, &mut ScanWorkspace::new(), &mut h)?;
    Ok(h)
}

pub fn scan_rooted<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    conv: PathConvention,
) -> Result<HiddenStates<T>> {
    scan_rooted_with(tree, params, conv, Exec::Sequential)
}

pub fn scan_rooted_with<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    conv: PathConvention,
    exec: Exec,
) -> Result<HiddenStates<T>> {
    forward(tree, params, ScanMode::Rooted, conv, exec)
}

pub fn scan_full<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    conv: PathConvention,
) -> Result<HiddenStates<T>> {
    scan_full_with(tree, params, conv, Exec::Sequential)
}

pub fn scan_full_with<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    conv: PathConvention,
    exec: Exec,
) -> Result<HiddenStates<T>> {
    forward(tree, params, ScanMode::Full, conv, exec)
}

pub fn scan<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    mode: ScanMode,
    conv: PathConvention,
    exec: Exec,
) -> Result<HiddenStates<T>> {
    forward(tree, params, mode, conv, exec)
}

fn check_grad<T: Float>(params: &ScanParams<T>, grad_h: &Matrix<T>) -> Result<()> {
    contract!(grad_h.shape() == params.a.shape(), "grad_h is {:?}, expected {:?}", grad_h.shape(), params.a.shape());
    Ok(())
}

/// Reverse-mode gradients of the full scan for upstream gradient `grad_h`.
pub fn scan_full_backward<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    grad_h: &Matrix<T>,
    conv: PathConvention,
) -> Result<GradientBundle<T>> {
    scan_backward(tree, params, grad_h, ScanMode::Full, conv, Exec::Sequential)
}

pub fn scan_rooted_backward<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    grad_h: &Matrix<T>,
    conv: PathConvention,
) -> Result<GradientBundle<T>> {
    scan_backward(tree, params, grad_h, ScanMode::Rooted, conv, Exec::Sequential)
}

pub fn scan_backward<T: Float + Send + Sync>(
    tree: &RootedTree,
    params: &ScanParams<T>,
    grad_h: &Matrix<T>,
    mode: ScanMode,
    conv: PathConvention,
    exec: Exec,
) -> Result<GradientBundle<T>> {
    check_shapes(tree, params)?;
    check_grad(params, grad_h)?;
    let (pp, kids) = (tree.parent_positions(), tree.child_offsets());
    let [d_a, d_u] = blocked(exec, tree, &[&params.a, &params.u, grad_h], |g, w| {
        kernel::backward(pp, kids, &g[0], &g[1], &g[2], w, mode, conv)
    });
    Ok(GradientBundle { d_a, d_u })
}
