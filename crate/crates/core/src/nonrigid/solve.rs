use std::io::Write;

use nalgebra::DVector;

use super::terms::reg_residual;
use super::{
    associate_by_index, associate_nonrigid, build_data_term, build_reg_term, data_residual, BlockSystem,
    NodeCorrespondence, NonRigidConfig, NonRigidError,
};
use crate::defgraph::DeformationGraph;
use crate::image::DepthImage;
use crate::math::{DualQuaternion, PinholeIntrinsics, RigidTransform, Twist, TwistMode};
use crate::surface::TriangleMesh;
use crate::tracker::{robust_cost, RobustKernel};

/// What the canonical mesh is registered to.
#[derive(Debug, Clone, Copy)]
pub enum RegistrationTarget<'a> {
    /// Same topology; vertex `i` pairs with vertex `i`. Association is fixed.
    Mesh(&'a TriangleMesh),
    /// Live depth seen from `pose`; re-associated projectively every iteration.
    Depth { depth: &'a DepthImage, pose: RigidTransform, intr: PinholeIntrinsics },
}

/// One accepted iteration; row 0 is the starting state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub iteration: usize,
    pub data: f64,
    pub reg: f64,
    /// `data + phi * reg`.
    pub total: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone)]
pub struct WarpSolution {
    pub graph: DeformationGraph,
    pub energies: Vec<EnergyRecord>,
    pub correspondences: usize,
    pub rejected_steps: usize,
}

fn associate(
    canonical: &TriangleMesh,
    graph: &DeformationGraph,
    target: &RegistrationTarget,
    cfg: &NonRigidConfig,
) -> Result<Vec<NodeCorrespondence>, NonRigidError> {
    match target {
        RegistrationTarget::Mesh(mesh) => associate_by_index(canonical, graph, mesh, cfg),
        RegistrationTarget::Depth { depth, pose, intr } => associate_nonrigid(canonical, graph, depth, pose, intr, cfg),
    }
}

/// `(E_data, E_reg)`: the data term sums `2 rho(r)` of the Tukey kernel (so
/// `r²` for small residuals); the regularizer sums squared edge residuals.
fn energy(graph: &DeformationGraph, corrs: &[NodeCorrespondence], cfg: &NonRigidConfig) -> (f64, f64) {
    let data = corrs.iter().map(|c| 2.0 * robust_cost(RobustKernel::Tukey, data_residual(graph, c), cfg.tukey_lambda)).sum();
    let transforms: Vec<RigidTransform> = graph.nodes.iter().map(|n| n.transform()).collect();
    let reg = graph.edge_pairs().map(|(i, j)| reg_residual(graph, &transforms, i, j).norm_squared()).sum();
    (data, reg)
}

/// Left-composes each node's transform with the exponential of its block of `h`.
fn apply_update(graph: &DeformationGraph, h: &DVector<f64>) -> DeformationGraph {
    let mut out = graph.clone();
    for (i, node) in out.nodes.iter_mut().enumerate() {
        let xi = Twist(nalgebra::Vector6::from_iterator(h.rows(6 * i, 6).iter().copied()));
        let step = DualQuaternion::from_transform(&xi.to_transform(TwistMode::Exact));
        node.dq = (step * node.dq).normalized();
    }
    out
}

/// Fits the node transforms of `graph` so that the warped `canonical` mesh
/// matches `target`.
///
/// Each iteration assembles the reweighted data rows and the `sqrt(phi)`
/// scaled regularization rows, solves the damped normal equations by
/// preconditioned conjugate gradients and accepts the step only if the
/// energy drops. Damping never falls below `lm_tau * max diag(J^T J)` of
/// the current system, grows by `lm_factor` per rejected step and shrinks
/// by it after an accepted one. Three consecutive rejected steps abort
/// with [`NonRigidError::Diverged`].
///
/// In index mode the normal of each pair stays the snapshot taken at
/// association, so tangential motion is held back only by the regularizer
/// and the damping floor.
pub fn solve_warp_field(
    graph: &DeformationGraph,
    canonical: &TriangleMesh,
    target: RegistrationTarget,
    cfg: &NonRigidConfig,
) -> Result<WarpSolution, NonRigidError> {
    cfg.validate()?;
    let mut graph = graph.clone();
    let mut corrs = associate(canonical, &graph, &target, cfg)?;
    let (d, r) = energy(&graph, &corrs, cfg);
    let mut current = d + cfg.phi * r;
    let mut energies = vec![EnergyRecord { iteration: 0, data: d, reg: r, total: current, step_norm: 0.0 }];
    let mut damping: f64 = 0.0;
    let mut rejected_steps = 0;
    let projective = matches!(target, RegistrationTarget::Depth { .. });

    'outer: for iteration in 1..=cfg.max_iters {
        if projective && iteration > 1 {
            corrs = associate(canonical, &graph, &target, cfg)?;
            let (d, r) = energy(&graph, &corrs, cfg);
            current = d + cfg.phi * r;
        }
        let (jd, rd) = build_data_term(&corrs, &graph, cfg.tukey_lambda);
        if jd.row_count() == 0 {
            return Err(NonRigidError::EmptyAssociation);
        }
        let (jr, rr) = build_reg_term(&graph, cfg.phi);
        let mut sys = BlockSystem::new(graph.len());
        sys.add_term(&jd, &rd);
        sys.add_term(&jr, &rr);
        damping = damping.max(cfg.lm_tau * sys.max_diagonal());
        let mut consecutive = 0;
        loop {
            let h = sys.solve(damping, cfg.cg_tol)?;
            let step_norm = h.norm();
            if step_norm < cfg.step_tol {
                break 'outer;
            }
            let candidate = apply_update(&graph, &h);
            let (d, r) = energy(&candidate, &corrs, cfg);
            let total = d + cfg.phi * r;
            if total < current {
                graph = candidate;
                current = total;
                energies.push(EnergyRecord { iteration, data: d, reg: r, total, step_norm });
                damping /= cfg.lm_factor;
                break;
            }
            // No measurable change left: treat as converged rather than diverged.
            if total - current <= 1e-12 * current.max(f64::MIN_POSITIVE) {
                break 'outer;
            }
            rejected_steps += 1;
            consecutive += 1;
            if consecutive >= 3 {
                return Err(NonRigidError::Diverged(consecutive));
            }
            damping *= cfg.lm_factor;
        }
    }
    Ok(WarpSolution { graph, energies, correspondences: corrs.len(), rejected_steps })
}

/// CSV with header `iteration,E_data,E_reg,E_total,step_norm`.
pub fn write_energy_csv<W: Write>(records: &[EnergyRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration,E_data,E_reg,E_total,step_norm")?;
    for r in records {
        writeln!(w, "{},{:e},{:e},{:e},{:e}", r.iteration, r.data, r.reg, r.total, r.step_norm)?;
    }
    w.flush()
}
