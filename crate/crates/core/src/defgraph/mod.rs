//! Embedded deformation graph: nodes sampled on a surface, each carrying a
//! rigid transform that is blended over nearby points.

mod graph;
mod kdtree;
mod serial;

pub use graph::{build_graph, node_weight, DeformationGraph, GraphNode, NodeInfluence, RADIUS_SCALE};
pub use kdtree::KdTree;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("mesh has {vertices} vertices, cannot sample {nodes} nodes")]
    MeshTooSmall { vertices: usize, nodes: usize },
    #[error("node count {nodes} must exceed the neighbor count {k}")]
    TooFewNodes { nodes: usize, k: usize },
    #[error("neighbor count must be at least 1")]
    ZeroNeighbors,
    #[error("node {0} coincides with all of its neighbors")]
    ZeroRadius(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
