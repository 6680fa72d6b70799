use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{root_tree, RootedTree, SpanningTree};
use crate::error::{GgError, Result};
use crate::graph::WeightedEdge;

pub const TREE_SCHEMA_VERSION: u32 = 1;

/// On-disk form of a rooted spanning tree.
///
/// Weights are written with 17 significant digits so that reading the
/// document back yields the exact same `f64` values.
#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct TreeDocument {
    pub schema_version: u32,
    #[serde(rename = "L")]
    pub nodes: usize,
    pub root: usize,
    #[serde(default)]
    pub algorithm: Option<String>,
    pub edges: Vec<(usize, usize, f64)>,
    pub total_weight: f64,
}

#[derive(Serialize)]
struct Wire<'a> {
    schema_version: u32,
    #[serde(rename = "L")]
    nodes: usize,
    root: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    algorithm: &'a Option<String>,
    edges: Vec<(usize, usize, Box<RawValue>)>,
    total_weight: Box<RawValue>,
}

fn exact(x: f64) -> Result<Box<RawValue>> {
    if !x.is_finite() {
        return Err(GgError::InvalidInput(format!("cannot serialize weight {x}")));
    }
    Ok(RawValue::from_string(format!("{x:.16e}"))?)
}

impl TreeDocument {
    pub fn new(tree: &SpanningTree, root: usize, algorithm: Option<&str>) -> Self {
        Self {
            schema_version: TREE_SCHEMA_VERSION,
            nodes: tree.nodes(),
            root,
            algorithm: algorithm.map(str::to_owned),
            edges: tree.edges().iter().map(|e| (e.u, e.v, e.w)).collect(),
            total_weight: tree.total_weight(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = Wire {
            schema_version: self.schema_version,
            nodes: self.nodes,
            root: self.root,
            algorithm: &self.algorithm,
            edges: self.edges.iter().map(|&(u, v, w)| Ok((u, v, exact(w)?))).collect::<Result<_>>()?,
            total_weight: exact(self.total_weight)?,
        };
        let mut s = serde_json::to_string_pretty(&wire)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.schema_version != TREE_SCHEMA_VERSION {
            return Err(GgError::Format(format!("unsupported tree schema_version {}", doc.schema_version)));
        }
        Ok(doc)
    }

    pub fn tree(&self) -> Result<SpanningTree> {
        let edges = self.edges.iter().map(|&(u, v, w)| WeightedEdge::new(u, v, w)).collect();
        let tree = SpanningTree::from_edges(self.nodes, edges)?;
        let tol = 1e-9 * tree.total_weight().abs().max(1.0);
        if (tree.total_weight() - self.total_weight).abs() > tol {
            return Err(GgError::Format(format!(
                "total_weight {} disagrees with edge sum {}",
                self.total_weight,
                tree.total_weight()
            )));
        }
        Ok(tree)
    }

    pub fn rooted(&self) -> Result<RootedTree> {
        root_tree(&self.tree()?, self.root)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
