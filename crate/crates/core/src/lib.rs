#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod exec;
pub mod format;
pub mod graph;
pub mod harness;
pub mod layer;
pub mod matrix;
pub mod mst;
pub mod scan;
