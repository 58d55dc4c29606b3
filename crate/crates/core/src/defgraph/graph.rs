use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GraphError, KdTree};
use crate::math::{dqlb, DualQuaternion, RigidTransform, Vec3};
use crate::surface::TriangleMesh;

/// Node radius as a multiple of the distance to the K-th nearest node.
pub const RADIUS_SCALE: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphNode {
    /// Canonical position, meters.
    pub position: Vec3,
    /// Influence extent, meters.
    pub radius: f64,
    pub dq: DualQuaternion,
}

impl GraphNode {
    pub fn transform(&self) -> RigidTransform {
        self.dq.to_transform()
    }
}

/// Gaussian influence `exp(-|v - x|² / (2 w²))` of `node` on `x`.
pub fn node_weight(node: &GraphNode, x: &Vec3) -> f64 {
    (-(node.position - x).norm_squared() / (2.0 * node.radius * node.radius)).exp()
}

/// Nodes acting on one canonical point, ascending by node index, with
/// weights normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeInfluence {
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationGraph {
    pub nodes: Vec<GraphNode>,
    /// `edges[i]`: the K nearest other nodes of node `i`, nearest first.
    pub edges: Vec<Vec<usize>>,
    pub k: usize,
    tree: KdTree,
}

impl DeformationGraph {
    /// Graph over explicit nodes; edges and the search tree are derived from
    /// the node positions.
    pub fn from_nodes(nodes: Vec<GraphNode>, k: usize) -> Result<Self, GraphError> {
        if k == 0 {
            return Err(GraphError::ZeroNeighbors);
        }
        let tree = KdTree::build(nodes.iter().map(|n| n.position).collect());
        let edges = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                tree.knn(&n.position, k + 1).into_iter().map(|(j, _)| j).filter(|&j| j != i).take(k).collect()
            })
            .collect();
        Ok(Self { nodes, edges, k, tree })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tree(&self) -> &KdTree {
        &self.tree
    }

    /// Directed edges `(i, j)` for every node and each of its neighbors.
    pub fn edge_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().enumerate().flat_map(|(i, js)| js.iter().map(move |&j| (i, j)))
    }

    /// The K nearest nodes to `x` with normalized Gaussian weights. Falls
    /// back to uniform weights when every Gaussian underflows.
    pub fn influence(&self, x: &Vec3) -> NodeInfluence {
        let mut near = self.tree.knn(x, self.k);
        near.sort_by_key(|(i, _)| *i);
        let nodes: Vec<usize> = near.iter().map(|(i, _)| *i).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|&i| node_weight(&self.nodes[i], x)).collect();
        let total: f64 = weights.iter().sum();
        if total > 0.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        } else {
            weights.fill(1.0 / nodes.len() as f64);
        }
        NodeInfluence { nodes, weights }
    }

    /// Blended dual quaternion for a given influence set.
    pub fn blend(&self, inf: &NodeInfluence) -> DualQuaternion {
        let dqs: Vec<DualQuaternion> = inf.nodes.iter().map(|&i| self.nodes[i].dq).collect();
        // Weights are positive and normalized, so only antipodal cancellation
        // can fail; fall back to the nearest-index node in that case.
        dqlb(&inf.weights, &dqs).unwrap_or(dqs[0])
    }

    /// Warps a canonical point and unit normal through the blended
    /// transform of its nearest nodes. Normals are rotated only; the blend
    /// is rigid, so no inverse transpose is needed.
    pub fn warp_point(&self, x: &Vec3, normal: &Vec3) -> (Vec3, Vec3) {
        let t = self.blend(&self.influence(x)).to_transform();
        (t.transform_point(x), (t.rotation * normal).normalize())
    }

    pub fn warp_mesh(&self, mesh: &TriangleMesh) -> TriangleMesh {
        use rayon::prelude::*;
        let (vertices, normals): (Vec<Vec3>, Vec<Vec3>) =
            mesh.vertices.par_iter().zip(&mesh.normals).map(|(v, n)| self.warp_point(v, n)).unzip();
        TriangleMesh { vertices, normals, colors: mesh.colors.clone(), faces: mesh.faces.clone() }
    }

    /// Sets every node to the same transform.
    pub fn set_all(&mut self, t: &RigidTransform) {
        let dq = DualQuaternion::from_transform(t);
        self.nodes.iter_mut().for_each(|n| n.dq = dq);
    }

    pub fn reset(&mut self) {
        self.set_all(&RigidTransform::identity());
    }
}

/// Samples `node_count` distinct mesh vertices with a ChaCha8 generator
/// seeded by `seed`, sets every node to the identity and links each to its
/// `k` nearest nodes. Node order follows vertex order.
pub fn build_graph(mesh: &TriangleMesh, node_count: usize, k: usize, seed: u64) -> Result<DeformationGraph, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroNeighbors);
    }
    if node_count <= k {
        return Err(GraphError::TooFewNodes { nodes: node_count, k });
    }
    if mesh.vertex_count() < node_count {
        return Err(GraphError::MeshTooSmall { vertices: mesh.vertex_count(), nodes: node_count });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, mesh.vertex_count(), node_count).into_vec();
    picked.sort_unstable();
    let provisional: Vec<GraphNode> = picked
        .iter()
        .map(|&v| GraphNode { position: mesh.vertices[v], radius: 1.0, dq: DualQuaternion::identity() })
        .collect();
    let mut graph = DeformationGraph::from_nodes(provisional, k)?;
    for i in 0..graph.nodes.len() {
        let last = *graph.edges[i].last().expect("k >= 1 neighbors");
        let dist = (graph.nodes[i].position - graph.nodes[last].position).norm();
        if !(dist > 0.0) {
            return Err(GraphError::ZeroRadius(i));
        }
        graph.nodes[i].radius = RADIUS_SCALE * dist;
    }
    Ok(graph)
}
