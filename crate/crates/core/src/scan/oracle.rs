//! Quadratic reference scan built from explicit path products.

use super::{check_shapes, HiddenStates, PathConvention, ScanParams};
use crate::error::{contract, Result};
use crate::exec::{map_range, Exec};
use crate::matrix::Matrix;
use crate::mst::{RootedTree, NO_PARENT};

/// Product of the transitions on the path `j -> i`. Edge-count takes every
/// node after `j` up to and including `i`; interior-only drops `i` too.
pub fn path_weight(tree: &RootedTree, a: &Matrix<f64>, j: usize, i: usize, conv: PathConvention) -> Result<Vec<f64>> {
    contract!(a.rows() == tree.len(), "a has {} rows for a tree of {}", a.rows(), tree.len());
    let path = tree.path(j, i)?;
    let end = match conv {
        PathConvention::EdgeCount => path.len(),
        PathConvention::InteriorOnly => path.len().saturating_sub(1).max(1),
    };
    let mut w = vec![1.0; a.cols()];
    for &k in &path[1..end] {
        for (x, &f) in w.iter_mut().zip(a.row(k)) {
            *x *= f;
        }
    }
    Ok(w)
}

pub fn scan_dense_oracle(
    tree: &RootedTree,
    params: &ScanParams<f64>,
    conv: PathConvention,
) -> Result<HiddenStates<f64>> {
    scan_dense_oracle_with(tree, params, conv, Exec::Sequential)
}

/// `h_i = sum_j path_weight(j -> i) * u_j`, one outward traversal per node.
pub fn scan_dense_oracle_with(
    tree: &RootedTree,
    params: &ScanParams<f64>,
    conv: PathConvention,
    exec: Exec,
) -> Result<HiddenStates<f64>> {
    check_shapes(tree, params)?;
    let (n, d) = (params.nodes(), params.state_dim());
    let (a, u) = (params.a(), params.u());
    let mut adj = vec![Vec::new(); n];
    for (v, &p) in tree.parent().iter().enumerate() {
        if p != NO_PARENT {
            adj[v].push(p);
            adj[p].push(v);
        }
    }
    let rows = map_range(exec, n, |i| {
        let mut h = u.row(i).to_vec();
        let mut weight = vec![0.0; n * d];
        weight[i * d..(i + 1) * d].fill(1.0);
        // (node, neighbour towards i)
        let mut stack: Vec<(usize, usize)> = adj[i].iter().map(|&j| (j, i)).collect();
        while let Some((j, k)) = stack.pop() {
            let include_k = k != i || conv == PathConvention::EdgeCount;
            for c in 0..d {
                let wk = weight[k * d + c];
                let wj = if include_k { wk * a.get(k, c) } else { wk };
                weight[j * d + c] = wj;
                h[c] += wj * u.get(j, c);
            }
            stack.extend(adj[j].iter().filter(|&&x| x != k).map(|&x| (x, j)));
        }
        h
    });
    Matrix::from_vec(n, d, rows.concat())
}
