//! Candidate graphs over a feature set.
//!
//! Every node is a feature row; edges carry the cosine dissimilarity
//! `exp(-cos(x_u, x_v))`, so the weight of an edge lies in `[1/e, e]`.

use std::cmp::Ordering;

use crate::error::{contract, GgError, Result};
use crate::exec::{self, Exec};
use crate::matrix::Matrix;
use crate::mst::UnionFind;

/// Added to the norm product so zero rows stay well defined.
pub const NORM_EPS: f64 = 1e-12;

/// Largest node count accepted by [`CandidateTopology::Dense`] by default.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// `L` feature vectors of dimension `D_model`, stored row-major in `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    data: Matrix<f64>,
}

impl FeatureSet {
    pub fn new(data: Matrix<f64>) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(GgError::InvalidInput(format!(
                "feature set must be at least 1x1, got {}x{}",
                data.rows(),
                data.cols()
            )));
        }
        if !data.all_finite() {
            return Err(GgError::InvalidInput("feature set has non-finite entries".into()));
        }
        Ok(Self { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        contract!(rows.iter().all(|r| r.len() == d), "ragged feature rows");
        Self::new(Matrix::from_vec(rows.len(), d, rows.concat())?)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn matrix(&self) -> &Matrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> Matrix<f64> {
        self.data
    }
}

/// Which node pairs are offered to the spanning-tree stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateTopology {
    /// Complete graph.
    Dense,
    /// `rows x cols` lattice, node index `r * cols + c`; connectivity 4 or 8.
    Grid { rows: usize, cols: usize, connectivity: u8 },
    /// Symmetrized exact k-nearest neighbours, augmented until connected.
    Knn { k: usize },
}

impl std::str::FromStr for CandidateTopology {
    type Err = GgError;

    /// `dense`, `grid:HxW`, `grid:HxW:8`, `knn:K`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || GgError::InvalidConfig(format!("unrecognised topology '{s}'"));
        let mut parts = s.split(':');
        match parts.next() {
            Some("dense") if parts.next().is_none() => Ok(Self::Dense),
            Some("knn") => {
                let k = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(Self::Knn { k })
            }
            Some("grid") => {
                let dims = parts.next().ok_or_else(bad)?;
                let (h, w) = dims.split_once('x').ok_or_else(bad)?;
                let connectivity = match parts.next() {
                    None => 4,
                    Some(c) => c.parse().map_err(|_| bad())?,
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                Ok(Self::Grid {
                    rows: h.parse().map_err(|_| bad())?,
                    cols: w.parse().map_err(|_| bad())?,
                    connectivity,
                })
            }
            _ => Err(bad()),
        }
    }
}

/// Undirected weighted edge with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedEdge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

impl WeightedEdge {
    /// Canonicalizes the endpoint order.
    pub fn new(a: usize, b: usize, w: f64) -> Self {
        let (u, v) = if a < b { (a, b) } else { (b, a) };
        Self { u, v, w }
    }

    /// Total order used for every tie-break: weight, then `u`, then `v`.
    #[inline]
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.w.total_cmp(&other.w).then(self.u.cmp(&other.u)).then(self.v.cmp(&other.v))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn weight_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    (-dot(a, b) / (na * nb + NORM_EPS)).exp()
}

/// `exp(-<a,b> / (|a| |b| + eps))`.
pub fn cosine_dissimilarity(a: &[f64], b: &[f64]) -> Result<f64> {
    contract!(a.len() == b.len(), "vector lengths differ: {} vs {}", a.len(), b.len());
    if !a.iter().chain(b).all(|v| v.is_finite()) {
        return Err(GgError::InvalidInput("non-finite vector entry".into()));
    }
    Ok(weight_with_norms(a, b, norm(a), norm(b)))
}

/// Candidate `(u, v)` pairs, canonical and sorted, using the default dense cap.
pub fn build_candidate_edges(features: &FeatureSet, topology: CandidateTopology) -> Result<Vec<(usize, usize)>> {
    build_candidate_edges_with(features, topology, DEFAULT_DENSE_CAP, Exec::default())
}

pub fn build_candidate_edges_with(
    features: &FeatureSet,
    topology: CandidateTopology,
    dense_cap: usize,
    exec: Exec,
) -> Result<Vec<(usize, usize)>> {
    let l = features.len();
    match topology {
        CandidateTopology::Dense => {
            if l > dense_cap {
                return Err(GgError::InvalidConfig(format!(
                    "dense topology is capped at L <= {dense_cap}, got L = {l}; use grid or knn"
                )));
            }
            let mut pairs = Vec::with_capacity(l * l.saturating_sub(1) / 2);
            for u in 0..l {
                for v in u + 1..l {
                    pairs.push((u, v));
                }
            }
            Ok(pairs)
        }
        CandidateTopology::Grid { rows, cols, connectivity } => grid_pairs(l, rows, cols, connectivity),
        CandidateTopology::Knn { k } => knn_pairs(features, k, exec),
    }
}

fn grid_pairs(l: usize, rows: usize, cols: usize, connectivity: u8) -> Result<Vec<(usize, usize)>> {
    if rows.checked_mul(cols) != Some(l) {
        return Err(GgError::InvalidConfig(format!("grid {rows}x{cols} does not match L = {l}")));
    }
    if connectivity != 4 && connectivity != 8 {
        return Err(GgError::InvalidConfig(format!("grid connectivity must be 4 or 8, got {connectivity}")));
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let me = idx(r, c);
            if c + 1 < cols {
                pairs.push((me, idx(r, c + 1)));
            }
            if r + 1 < rows {
                pairs.push((me, idx(r + 1, c)));
                if connectivity == 8 {
                    if c + 1 < cols {
                        pairs.push((me, idx(r + 1, c + 1)));
                    }
                    if c > 0 {
                        pairs.push((me, idx(r + 1, c - 1)));
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

fn knn_pairs(features: &FeatureSet, k: usize, exec: Exec) -> Result<Vec<(usize, usize)>> {
    let l = features.len();
    if k == 0 || k >= l {
        return Err(GgError::InvalidConfig(format!("knn requires 1 <= k < L, got k = {k}, L = {l}")));
    }
    let norms: Vec<f64> = (0..l).map(|i| norm(features.row(i))).collect();
    let weight = |i: usize, j: usize| weight_with_norms(features.row(i), features.row(j), norms[i], norms[j]);

    let neighbours: Vec<Vec<usize>> = exec::map_range(exec, l, |i| {
        let mut cand: Vec<(f64, usize)> = (0..l).filter(|&j| j != i).map(|j| (weight(i, j), j)).collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_key);
            cand.truncate(k);
        }
        cand.into_iter().map(|(_, j)| j).collect()
    });

    let mut pairs: Vec<(usize, usize)> =
        neighbours.iter().enumerate().flat_map(|(i, ns)| ns.iter().map(move |&j| (i.min(j), i.max(j)))).collect();
    pairs.sort_unstable();
    pairs.dedup();

    let mut uf = UnionFind::new(l);
    for &(u, v) in &pairs {
        uf.union(u, v);
    }
    // Borůvka-style augmentation: lightest inter-component edge per component.
    while uf.components() > 1 {
        let comp: Vec<usize> = (0..l).map(|i| uf.find(i)).collect();
        let best_per_node: Vec<Option<WeightedEdge>> = exec::map_range(exec, l, |i| {
            let mut best: Option<WeightedEdge> = None;
            for j in 0..l {
                if comp[j] == comp[i] {
                    continue;
                }
                let e = WeightedEdge::new(i, j, weight(i, j));
                if best.is_none_or(|b| e.cmp_key(&b) == Ordering::Less) {
                    best = Some(e);
                }
            }
            best
        });
        let mut best_per_comp: Vec<Option<WeightedEdge>> = vec![None; l];
        for (i, cand) in best_per_node.into_iter().enumerate() {
            if let Some(e) = cand {
                let slot = &mut best_per_comp[comp[i]];
                if slot.is_none_or(|b| e.cmp_key(&b) == Ordering::Less) {
                    *slot = Some(e);
                }
            }
        }
        for e in best_per_comp.into_iter().flatten() {
            if uf.union(e.u, e.v) {
                pairs.push((e.u, e.v));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    Ok(pairs)
}

/// Attach cosine-dissimilarity weights to `pairs`, preserving their order.
pub fn weigh_edges(features: &FeatureSet, pairs: &[(usize, usize)]) -> Result<Vec<WeightedEdge>> {
    weigh_edges_with(features, pairs, Exec::default())
}

pub fn weigh_edges_with(features: &FeatureSet, pairs: &[(usize, usize)], exec: Exec) -> Result<Vec<WeightedEdge>> {
    let l = features.len();
    for &(u, v) in pairs {
        contract!(u < l && v < l, "edge ({u}, {v}) out of range for L = {l}");
    }
    let norms: Vec<f64> = (0..l).map(|i| norm(features.row(i))).collect();
    Ok(exec::map_slice(exec, pairs, |&(a, b)| {
        let w = weight_with_norms(features.row(a), features.row(b), norms[a], norms[b]);
        WeightedEdge::new(a, b, w)
    }))
}

/// True when no two edges share a weight.
pub fn weights_distinct(edges: &[WeightedEdge]) -> bool {
    let mut w: Vec<f64> = edges.iter().map(|e| e.w).collect();
    w.sort_unstable_by(f64::total_cmp);
    w.windows(2).all(|p| p[0] != p[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn cosine_reference_values() {
        let w = cosine_dissimilarity(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-9);
        assert!((cosine_dissimilarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_dissimilarity(&[1.0, 0.0], &[-1.0, 0.0]).unwrap() - E).abs() < 1e-9);
    }

    #[test]
    fn zero_rows_give_unit_weight() {
        assert_eq!(cosine_dissimilarity(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_dissimilarity(&[0.0, 0.0], &[3.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn cosine_errors() {
        assert!(matches!(cosine_dissimilarity(&[1.0], &[1.0, 2.0]), Err(GgError::Contract(_))));
        assert!(matches!(cosine_dissimilarity(&[f64::NAN], &[1.0]), Err(GgError::InvalidInput(_))));
    }

    #[test]
    fn dense_triangle() {
        let f = FeatureSet::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let pairs = build_candidate_edges(&f, CandidateTopology::Dense).unwrap();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn dense_cap_enforced() {
        let f = FeatureSet::new(Matrix::filled(10, 2, 1.0)).unwrap();
        let err = build_candidate_edges_with(&f, CandidateTopology::Dense, 8, Exec::Sequential);
        assert!(matches!(err, Err(GgError::InvalidConfig(_))));
    }

    #[test]
    fn grid_2x2_four_connected() {
        let f = FeatureSet::new(Matrix::filled(4, 1, 1.0)).unwrap();
        let topo = CandidateTopology::Grid { rows: 2, cols: 2, connectivity: 4 };
        let pairs = build_candidate_edges(&f, topo).unwrap();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn grid_2x2_eight_connected() {
        let f = FeatureSet::new(Matrix::filled(4, 1, 1.0)).unwrap();
        let topo = CandidateTopology::Grid { rows: 2, cols: 2, connectivity: 8 };
        let pairs = build_candidate_edges(&f, topo).unwrap();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn grid_and_knn_config_errors() {
        let f = FeatureSet::new(Matrix::filled(4, 1, 1.0)).unwrap();
        let bad_grid = CandidateTopology::Grid { rows: 3, cols: 2, connectivity: 4 };
        assert!(matches!(build_candidate_edges(&f, bad_grid), Err(GgError::InvalidConfig(_))));
        let bad_conn = CandidateTopology::Grid { rows: 2, cols: 2, connectivity: 6 };
        assert!(matches!(build_candidate_edges(&f, bad_conn), Err(GgError::InvalidConfig(_))));
        for k in [0, 4, 9] {
            let r = build_candidate_edges(&f, CandidateTopology::Knn { k });
            assert!(matches!(r, Err(GgError::InvalidConfig(_))));
        }
    }

    #[test]
    fn weigh_edges_checks_indices() {
        let f = FeatureSet::new(Matrix::filled(2, 2, 1.0)).unwrap();
        assert!(matches!(weigh_edges(&f, &[(0, 2)]), Err(GgError::Contract(_))));
        let w = weigh_edges(&f, &[(1, 0)]).unwrap();
        assert_eq!((w[0].u, w[0].v), (0, 1));
        assert!((w[0].w - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn topology_parsing() {
        assert_eq!("dense".parse::<CandidateTopology>().unwrap(), CandidateTopology::Dense);
        assert_eq!(
            "grid:3x4:8".parse::<CandidateTopology>().unwrap(),
            CandidateTopology::Grid { rows: 3, cols: 4, connectivity: 8 }
        );
        assert_eq!("knn:5".parse::<CandidateTopology>().unwrap(), CandidateTopology::Knn { k: 5 });
        assert!("ring".parse::<CandidateTopology>().is_err());
        assert!("knn:x".parse::<CandidateTopology>().is_err());
    }
}
