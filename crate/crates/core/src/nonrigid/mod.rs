//! Warp-field estimation: per-node twists of a deformation graph fitted to a
//! target surface with a point-to-plane data term and an as-rigid-as-possible
//! regularizer, solved by damped sparse Gauss-Newton.

mod solve;
mod sparse;
mod terms;

pub use solve::{solve_warp_field, write_energy_csv, EnergyRecord, RegistrationTarget, WarpSolution};
pub use sparse::{BlockSystem, SparseBlockMatrix};
pub use terms::{
    associate_by_index, associate_nonrigid, build_data_term, build_reg_term, data_residual, warp_with_jacobian,
    NodeCorrespondence, WarpJacobian,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NonRigidError {
    #[error("no usable correspondences between the model and the target")]
    EmptyAssociation,
    #[error("energy rose on {0} consecutive damped steps")]
    Diverged(usize),
    #[error("target mesh has {target} vertices, model has {model}")]
    TopologyMismatch { model: usize, target: usize },
    #[error("linear solver did not reach the requested accuracy (relative residual {0:e})")]
    SolverStalled(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Solver parameters. Distances are meters, angles radians.
#[derive(Debug, Clone, PartialEq)]
pub struct NonRigidConfig {
    /// Regularization weight.
    pub phi: f64,
    pub max_iters: usize,
    /// Tukey biweight cutoff on data residuals.
    pub tukey_lambda: f64,
    /// Stop once the stacked twist update is shorter than this.
    pub step_tol: f64,
    /// Damping floor relative to the largest diagonal entry of `J^T J`.
    pub lm_tau: f64,
    /// Damping multiplier after a rejected step; divided by it after an accepted one.
    pub lm_factor: f64,
    /// Relative residual target of the conjugate-gradient solve.
    pub cg_tol: f64,
    /// Projective association gates.
    pub dist_reject: f64,
    pub angle_reject: f64,
}

impl Default for NonRigidConfig {
    fn default() -> Self {
        Self {
            phi: 0.2,
            max_iters: 30,
            tukey_lambda: 0.05,
            step_tol: 1e-6,
            lm_tau: 1e-3,
            lm_factor: 10.0,
            cg_tol: 1e-8,
            dist_reject: 0.10,
            angle_reject: 20f64.to_radians(),
        }
    }
}

impl NonRigidConfig {
    pub fn validate(&self) -> Result<(), NonRigidError> {
        let bad = |m: String| Err(NonRigidError::InvalidConfig(m));
        if !(self.phi >= 0.0) || !self.phi.is_finite() {
            return bad(format!("phi {} must be finite and >= 0", self.phi));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        for (name, v) in [
            ("tukey_lambda", self.tukey_lambda),
            ("lm_tau", self.lm_tau),
            ("cg_tol", self.cg_tol),
            ("dist_reject", self.dist_reject),
            ("angle_reject", self.angle_reject),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} {v} must be positive"));
            }
        }
        if !(self.lm_factor > 1.0) {
            return bad(format!("lm_factor {} must exceed 1", self.lm_factor));
        }
        if !(self.step_tol >= 0.0) {
            return bad(format!("step_tol {} must be >= 0", self.step_tol));
        }
        Ok(())
    }
}
