use nalgebra::{Matrix3x6, Quaternion, RowVector6, SMatrix, SVector};
use rayon::prelude::*;

use super::{NonRigidConfig, NonRigidError, SparseBlockMatrix};
use crate::defgraph::{DeformationGraph, NodeInfluence};
use crate::image::{compute_normals, DepthImage};
use crate::math::{skew, PinholeIntrinsics, RigidTransform, Vec3};
use crate::surface::{raycast_mesh_hits, TriangleMesh};
use crate::tracker::{robust_weight, RobustKernel};

/// One model-to-target pair. The canonical point and normal are what the
/// solver warps; the warped values are a snapshot taken at association time.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeCorrespondence {
    pub canonical_point: Vec3,
    pub canonical_normal: Vec3,
    pub warped_point: Vec3,
    pub warped_normal: Vec3,
    pub target_point: Vec3,
    pub influence: NodeInfluence,
    pub robust_weight: f64,
}

/// Warped point and normal with their derivatives with respect to the
/// left-composed twists of each influencing node.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpJacobian {
    pub point: Vec3,
    pub normal: Vec3,
    /// `(node, d point / d twist, d normal / d twist)`, ascending by node.
    pub blocks: Vec<(usize, Matrix3x6<f64>, Matrix3x6<f64>)>,
}

fn pure(v: &Vec3) -> Quaternion<f64> {
    Quaternion::new(0.0, v.x, v.y, v.z)
}

fn vec_part(q: &Quaternion<f64>) -> Vec3 {
    Vec3::new(q.i, q.j, q.k)
}

/// Basis quaternion for component `i` of `(w, x, y, z)`.
fn basis(i: usize) -> Quaternion<f64> {
    let mut c = [0.0; 4];
    c[i] = 1.0;
    Quaternion::new(c[0], c[1], c[2], c[3])
}

fn component(q: &Quaternion<f64>, i: usize) -> f64 {
    [q.w, q.i, q.j, q.k][i]
}

/// Warps `x` and `n` through the dual-quaternion blend of `inf` and
/// differentiates the result exactly.
///
/// With the unnormalized blend `b = (r, d)` and `s = |r|²`, the warp is
/// `p = vec(r x r* + 2 d r*) / s` and `n' = vec(r n r*) / s`; the blend is
/// linear in each node's dual quaternion, whose derivative under
/// `dq <- dq(exp(xi)) dq` at `xi = 0` is `½ (0, w) dq` for rotation and
/// `ε ½ (0, v) real` for translation.
pub fn warp_with_jacobian(graph: &DeformationGraph, x: &Vec3, n: &Vec3, inf: &NodeInfluence) -> WarpJacobian {
    let pivot = graph.nodes[inf.nodes[0]].dq.real;
    let coeffs: Vec<f64> = inf
        .nodes
        .iter()
        .zip(&inf.weights)
        .map(|(&k, &w)| if pivot.dot(&graph.nodes[k].dq.real) < 0.0 { -w } else { w })
        .collect();
    let zero = Quaternion::new(0.0, 0.0, 0.0, 0.0);
    let (mut r, mut d) = (zero, zero);
    for (&k, &c) in inf.nodes.iter().zip(&coeffs) {
        r += graph.nodes[k].dq.real * c;
        d += graph.nodes[k].dq.dual * c;
    }
    let s = r.norm_squared();
    let rc = r.conjugate();
    let (xq, nq) = (pure(x), pure(n));
    let point = vec_part(&(r * xq * rc + d * rc * 2.0)) / s;
    let normal = vec_part(&(r * nq * rc)) / s;

    // Derivatives with respect to the 8 blend components (real then dual).
    let mut dp = SMatrix::<f64, 3, 8>::zeros();
    let mut dn = SMatrix::<f64, 3, 8>::zeros();
    for i in 0..4 {
        let e = basis(i);
        let ec = e.conjugate();
        let ds = 2.0 * component(&r, i);
        let dnum_p = vec_part(&(e * xq * rc + r * xq * ec + d * ec * 2.0));
        let dnum_n = vec_part(&(e * nq * rc + r * nq * ec));
        dp.set_column(i, &((dnum_p - point * ds) / s));
        dn.set_column(i, &((dnum_n - normal * ds) / s));
        dp.set_column(4 + i, &(vec_part(&(e * rc * 2.0)) / s));
    }

    let blocks = inf
        .nodes
        .iter()
        .zip(&coeffs)
        .map(|(&k, &c)| {
            let q = &graph.nodes[k].dq;
            let mut dq = SMatrix::<f64, 8, 6>::zeros();
            for j in 0..3 {
                let e = pure(&Vec3::ith(j, 0.5));
                let (re, du) = (e * q.real, e * q.dual);
                let t = e * q.real;
                for c4 in 0..4 {
                    dq[(c4, j)] = component(&re, c4);
                    dq[(4 + c4, j)] = component(&du, c4);
                    dq[(4 + c4, 3 + j)] = component(&t, c4);
                }
            }
            (k, dp * dq * c, dn * dq * c)
        })
        .collect();
    WarpJacobian { point, normal, blocks }
}

/// Unweighted point-to-plane residual `n'·(p' - target)` under the current graph.
pub fn data_residual(graph: &DeformationGraph, corr: &NodeCorrespondence) -> f64 {
    let t = graph.blend(&corr.influence).to_transform();
    let p = t.transform_point(&corr.canonical_point);
    corr.warped_normal.dot(&(p - corr.target_point))
}

/// One row per correspondence, scaled by the square root of its Tukey
/// weight so that the stacked least squares is the reweighted objective.
/// Rows whose weight is zero are omitted.
pub fn build_data_term(
    corrs: &[NodeCorrespondence],
    graph: &DeformationGraph,
    tukey_lambda: f64,
) -> (SparseBlockMatrix<1>, Vec<SVector<f64, 1>>) {
    let rows: Vec<Option<(Vec<(usize, RowVector6<f64>)>, f64)>> = corrs
        .par_iter()
        .map(|c| {
            let wj = warp_with_jacobian(graph, &c.canonical_point, &c.canonical_normal, &c.influence);
            let diff = wj.point - c.target_point;
            let r = c.warped_normal.dot(&diff);
            let w = robust_weight(RobustKernel::Tukey, r, tukey_lambda);
            if w == 0.0 {
                return None;
            }
            let sw = w.sqrt();
            let blocks = wj
                .blocks
                .iter()
                .map(|(k, jp, _)| (*k, c.warped_normal.transpose() * jp * sw))
                .collect();
            Some((blocks, r * sw))
        })
        .collect();
    let mut jac = SparseBlockMatrix::new(graph.len());
    let mut res = Vec::with_capacity(rows.len());
    for (blocks, r) in rows.into_iter().flatten() {
        jac.push_row(blocks);
        res.push(SVector::<f64, 1>::new(r));
    }
    (jac, res)
}

/// Edge weight: the larger of the two node radii.
fn edge_weight(graph: &DeformationGraph, i: usize, j: usize) -> f64 {
    graph.nodes[i].radius.max(graph.nodes[j].radius)
}

/// Unscaled regularization residual `α_ij (T_i v_j - T_j v_j)` of edge `(i, j)`.
pub(crate) fn reg_residual(graph: &DeformationGraph, transforms: &[RigidTransform], i: usize, j: usize) -> Vec3 {
    let vj = graph.nodes[j].position;
    (transforms[i].transform_point(&vj) - transforms[j].transform_point(&vj)) * edge_weight(graph, i, j)
}

/// One 3-row block per directed edge `(i, j)`, scaled by `sqrt(phi)`, with
/// blocks `α [-[T_i v_j]x | I]` for node i and `-α [-[T_j v_j]x | I]` for node j.
pub fn build_reg_term(graph: &DeformationGraph, phi: f64) -> (SparseBlockMatrix<3>, Vec<SVector<f64, 3>>) {
    let transforms: Vec<RigidTransform> = graph.nodes.iter().map(|n| n.transform()).collect();
    let scale = phi.sqrt();
    let block = |p: &Vec3, s: f64| {
        let mut b = Matrix3x6::zeros();
        b.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-skew(p) * s));
        b.fixed_view_mut::<3, 3>(0, 3).copy_from(&(nalgebra::Matrix3::identity() * s));
        b
    };
    let mut jac = SparseBlockMatrix::new(graph.len());
    let mut res = Vec::new();
    for (i, j) in graph.edge_pairs() {
        let vj = graph.nodes[j].position;
        let a = edge_weight(graph, i, j) * scale;
        let bi = block(&transforms[i].transform_point(&vj), a);
        let bj = block(&transforms[j].transform_point(&vj), -a);
        jac.push_row(if i < j { vec![(i, bi), (j, bj)] } else { vec![(j, bj), (i, bi)] });
        res.push(reg_residual(graph, &transforms, i, j) * scale);
    }
    (jac, res)
}

fn correspondence(
    graph: &DeformationGraph,
    x: Vec3,
    n: Vec3,
    target: Vec3,
    tukey_lambda: f64,
) -> NodeCorrespondence {
    let influence = graph.influence(&x);
    let t = graph.blend(&influence).to_transform();
    let warped_point = t.transform_point(&x);
    let warped_normal = t.rotation * n;
    let r = warped_normal.dot(&(warped_point - target));
    NodeCorrespondence {
        canonical_point: x,
        canonical_normal: n,
        warped_point,
        warped_normal,
        target_point: target,
        influence,
        robust_weight: robust_weight(RobustKernel::Tukey, r, tukey_lambda),
    }
}

/// Pairs vertex `i` of the canonical mesh with vertex `i` of `target`.
pub fn associate_by_index(
    canonical: &TriangleMesh,
    graph: &DeformationGraph,
    target: &TriangleMesh,
    cfg: &NonRigidConfig,
) -> Result<Vec<NodeCorrespondence>, NonRigidError> {
    if canonical.vertex_count() != target.vertex_count() {
        return Err(NonRigidError::TopologyMismatch { model: canonical.vertex_count(), target: target.vertex_count() });
    }
    if canonical.vertex_count() == 0 {
        return Err(NonRigidError::EmptyAssociation);
    }
    Ok(canonical
        .vertices
        .par_iter()
        .zip(&canonical.normals)
        .zip(&target.vertices)
        .map(|((x, n), t)| correspondence(graph, *x, *n, *t, cfg.tukey_lambda))
        .collect())
}

/// Renders the warped model from `pose` and pairs each covered pixel with
/// the live depth at the same pixel, subject to the distance and normal
/// angle gates.
pub fn associate_nonrigid(
    canonical: &TriangleMesh,
    graph: &DeformationGraph,
    live_depth: &DepthImage,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
    cfg: &NonRigidConfig,
) -> Result<Vec<NodeCorrespondence>, NonRigidError> {
    assert_eq!(live_depth.dims(), (intr.width, intr.height), "depth size differs from intrinsics");
    let warped = graph.warp_mesh(canonical);
    let hits = raycast_mesh_hits(&warped, pose, intr);
    let live_normals = compute_normals(live_depth, intr, 1);
    let cos_gate = cfg.angle_reject.cos();
    let corrs: Vec<NodeCorrespondence> = (0..intr.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let (hits, live_normals) = (&hits, &live_normals);
            (0..intr.width).filter_map(move |u| {
                let hit = hits.get(u, v).as_ref()?;
                let d = *live_depth.get(u, v);
                if !(d > 0.0) {
                    return None;
                }
                let live_n = pose.rotation * (*live_normals.get(u, v))?;
                let live_p = pose.transform_point(&intr.backproject_unchecked(u as f64, v as f64, d));
                let face = canonical.faces[hit.face];
                let bary = hit.barycentric;
                let x: Vec3 = (0..3).map(|k| canonical.vertices[face[k] as usize] * bary[k]).sum();
                let n: Vec3 = (0..3).map(|k| canonical.normals[face[k] as usize] * bary[k]).sum();
                let n = n.try_normalize(1e-12)?;
                let c = correspondence(graph, x, n, live_p, cfg.tukey_lambda);
                if (c.warped_point - live_p).norm() > cfg.dist_reject || c.warped_normal.dot(&live_n) < cos_gate {
                    return None;
                }
                Some(c)
            })
        })
        .collect();
    if corrs.is_empty() {
        return Err(NonRigidError::EmptyAssociation);
    }
    Ok(corrs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_plane;
    use crate::defgraph::{build_graph, GraphNode};
    use crate::math::{DualQuaternion, Twist, TwistMode};
    use rand::{Rng, SeedableRng};

    fn perturbed_graph(seed: u64) -> (TriangleMesh, DeformationGraph) {
        let mesh = generate_synthetic_plane(21, 13, 0.6);
        let mut g = build_graph(&mesh, 30, 4, seed).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for node in &mut g.nodes {
            let tw = Twist::new(
                Vec3::from_fn(|_, _| rng.random_range(-0.1..0.1)),
                Vec3::from_fn(|_, _| rng.random_range(-0.02..0.02)),
            );
            node.dq = DualQuaternion::from_transform(&tw.to_transform(TwistMode::Exact));
        }
        (mesh, g)
    }

    fn nudge(g: &DeformationGraph, node: usize, coord: usize, h: f64) -> DeformationGraph {
        let mut out = g.clone();
        let mut v = [0.0; 6];
        v[coord] = h;
        let step = DualQuaternion::from_transform(&Twist::from(v).to_transform(TwistMode::Exact));
        out.nodes[node].dq = step * out.nodes[node].dq;
        out
    }

    #[test]
    fn single_node_z_offset() {
        let node = GraphNode { position: Vec3::zeros(), radius: 0.1, dq: DualQuaternion::identity() };
        let g = DeformationGraph::from_nodes(vec![node], 1).unwrap();
        let c = correspondence(&g, Vec3::new(0.0, 0.0, 0.01), Vec3::z(), Vec3::zeros(), 0.05);
        assert_eq!(c.influence.weights, vec![1.0]);
        let (jac, res) = build_data_term(&[c], &g, 1e6);
        assert!((res[0][0] - 0.01).abs() < 1e-12);
        let block = jac.row(0)[0].1;
        assert!((block.fixed_view::<1, 3>(0, 3) - nalgebra::RowVector3::new(0.0, 0.0, 1.0)).amax() < 1e-6);
    }

    #[test]
    fn aligned_pairs_have_zero_residual() {
        let (mesh, g) = perturbed_graph(1);
        let warped = g.warp_mesh(&mesh);
        let corrs = associate_by_index(&mesh, &g, &warped, &NonRigidConfig::default()).unwrap();
        assert_eq!(corrs.len(), 273);
        let (_, res) = build_data_term(&corrs, &g, 0.05);
        assert!(res.iter().all(|r| r[0].abs() < 1e-12));
    }

    #[test]
    fn data_blocks_match_finite_differences() {
        let (mesh, g) = perturbed_graph(2);
        let target = generate_synthetic_plane(21, 13, 0.6).transformed(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 0.02)));
        let corrs = associate_by_index(&mesh, &g, &target, &NonRigidConfig::default()).unwrap();
        let (jac, _) = build_data_term(&corrs, &g, 1e6);
        assert_eq!(jac.row_count(), corrs.len());
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for (c, row) in corrs.iter().zip(jac.rows()).step_by(7) {
            assert_eq!(row.len(), 4);
            for (node, block) in row {
                for k in 0..6 {
                    let fd = (data_residual(&nudge(&g, *node, k, h), c) - data_residual(&nudge(&g, *node, k, -h), c)) / (2.0 * h);
                    let rel = (block[k] - fd).abs() / fd.abs().max(1e-3);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn warp_jacobian_matches_finite_differences() {
        let (_, g) = perturbed_graph(4);
        let x = Vec3::new(0.05, -0.1, 0.01);
        let n = Vec3::new(0.1, 0.2, 1.0).normalize();
        let inf = g.influence(&x);
        let wj = warp_with_jacobian(&g, &x, &n, &inf);
        let warp = |g: &DeformationGraph| {
            let t = g.blend(&inf).to_transform();
            (t.transform_point(&x), t.rotation * n)
        };
        let h = 1e-6;
        for (node, jp, jn) in &wj.blocks {
            for k in 0..6 {
                let (pp, np) = warp(&nudge(&g, *node, k, h));
                let (pm, nm) = warp(&nudge(&g, *node, k, -h));
                assert!(((pp - pm) / (2.0 * h) - jp.column(k)).amax() < 1e-7);
                assert!(((np - nm) / (2.0 * h) - jn.column(k)).amax() < 1e-7);
            }
        }
    }

    #[test]
    fn reg_blocks_match_finite_differences() {
        let (_, g) = perturbed_graph(3);
        let phi = 0.7;
        let (jac, res) = build_reg_term(&g, phi);
        assert_eq!(jac.row_count(), g.len() * g.k);
        let h = 1e-6;
        let residual = |graph: &DeformationGraph, i: usize, j: usize| {
            let ts: Vec<RigidTransform> = graph.nodes.iter().map(|n| n.transform()).collect();
            reg_residual(graph, &ts, i, j) * phi.sqrt()
        };
        for (row, ((i, j), r)) in jac.rows().zip(g.edge_pairs().zip(&res)) {
            assert_eq!(row.len(), 2);
            assert!((residual(&g, i, j) - r).norm() < 1e-15);
            for (node, block) in row {
                for k in 0..6 {
                    let fd = (residual(&nudge(&g, *node, k, h), i, j) - residual(&nudge(&g, *node, k, -h), i, j)) / (2.0 * h);
                    assert!((block.column(k) - fd).amax() < 1e-4 * fd.amax().max(1e-3), "edge ({i},{j}) node {node} coord {k}");
                }
            }
        }
    }

    #[test]
    fn reg_vanishes_for_shared_transform() {
        let (_, mut g) = perturbed_graph(4);
        let (_, res) = build_reg_term(&g, 1.0);
        assert!(res.iter().any(|r| r.norm() > 1e-6));
        g.set_all(&RigidTransform::from_axis_angle(&Vec3::y(), 0.4, Vec3::new(0.1, 0.0, 0.3)));
        let (_, res) = build_reg_term(&g, 1.0);
        assert!(res.iter().all(|r| r.norm() < 1e-12));
        g.reset();
        let (_, res) = build_reg_term(&g, 1.0);
        assert!(res.iter().all(|r| r.norm() == 0.0));
    }

    #[test]
    fn tukey_zero_rows_are_dropped() {
        let (mesh, g) = perturbed_graph(5);
        let far = mesh.transformed(&RigidTransform::from_translation(Vec3::new(0.0, 0.0, 1.0)));
        let corrs = associate_by_index(&mesh, &g, &far, &NonRigidConfig::default()).unwrap();
        let (jac, res) = build_data_term(&corrs, &g, 0.05);
        assert_eq!((jac.row_count(), res.len()), (0, 0));
    }

    #[test]
    fn projective_association_on_self_render() {
        let mesh = generate_synthetic_plane(21, 13, 0.6);
        let g = build_graph(&mesh, 30, 4, 1).unwrap();
        let intr = PinholeIntrinsics::new(60.0, 60.0, 31.5, 23.5, 64, 48).unwrap();
        // Camera 1 m above the plane looking down -z.
        let pose = RigidTransform::from_axis_angle(&Vec3::x(), std::f64::consts::PI, Vec3::new(0.0, 0.0, 1.0));
        let view = crate::surface::raycast_mesh(&mesh, &pose, &intr);
        let cfg = NonRigidConfig::default();
        let corrs = associate_nonrigid(&mesh, &g, &view.depth, &pose, &intr, &cfg).unwrap();
        assert!(corrs.len() > 500);
        assert!(corrs.iter().all(|c| data_residual(&g, c).abs() < 1e-9));

        // A plane tilted by 30 degrees fails the normal gate.
        let tilt = RigidTransform::from_axis_angle(&Vec3::y(), 30f64.to_radians(), Vec3::zeros());
        let tilted = crate::surface::raycast_mesh(&mesh.transformed(&tilt), &pose, &intr);
        assert!(matches!(
            associate_nonrigid(&mesh, &g, &tilted.depth, &pose, &intr, &cfg),
            Err(NonRigidError::EmptyAssociation)
        ));
    }
}
