//! Frame-to-model camera tracking with point-to-plane and photometric terms.

mod assoc;
mod config;
mod systems;
mod track;

pub use assoc::{find_correspondences, Correspondence};
pub use config::TrackerConfig;
pub use systems::{
    build_geometric_system, build_photometric_system, photometric_residual, solve_step, NormalEquations6,
    PhotometricSample,
};
pub use track::{track_frame, LevelStats, TrackResult, ViewSource};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrackError {
    #[error("linear system is degenerate (geometry does not constrain all six degrees of freedom)")]
    Degenerate,
    #[error("too few correspondences at level {level}: {found} < {required}")]
    TooFewCorrespondences { level: usize, found: usize, required: usize },
    #[error("pose estimate diverged ({0})")]
    Diverged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobustKernel {
    Huber,
    Tukey,
}

/// IRLS weight of residual `r`: Huber gives 1 inside `param` and `param/|r|`
/// outside; Tukey's biweight gives `(1 - (r/param)^2)^2` inside and 0 outside.
pub fn robust_weight(kernel: RobustKernel, r: f64, param: f64) -> f64 {
    assert!(param > 0.0, "robust kernel parameter must be positive");
    let a = r.abs();
    match kernel {
        RobustKernel::Huber => {
            if a <= param {
                1.0
            } else {
                param / a
            }
        }
        RobustKernel::Tukey => {
            if a <= param {
                let s = 1.0 - (r / param).powi(2);
                s * s
            } else {
                0.0
            }
        }
    }
}

/// Robust cost whose IRLS weight is [`robust_weight`]; quadratic `r^2/2` near 0.
pub fn robust_cost(kernel: RobustKernel, r: f64, param: f64) -> f64 {
    let a = r.abs();
    match kernel {
        RobustKernel::Huber => {
            if a <= param {
                0.5 * r * r
            } else {
                param * (a - 0.5 * param)
            }
        }
        RobustKernel::Tukey => {
            let c = param * param / 6.0;
            if a <= param {
                c * (1.0 - (1.0 - (r / param).powi(2)).powi(3))
            } else {
                c
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_boundaries() {
        assert_eq!(robust_weight(RobustKernel::Huber, 0.01, 0.05), 1.0);
        assert_eq!(robust_weight(RobustKernel::Huber, 0.05, 0.05), 1.0);
        assert!((robust_weight(RobustKernel::Huber, -0.1, 0.05) - 0.5).abs() < 1e-15);
        assert_eq!(robust_weight(RobustKernel::Tukey, 0.0, 0.05), 1.0);
        assert_eq!(robust_weight(RobustKernel::Tukey, 0.05, 0.05), 0.0);
        assert_eq!(robust_weight(RobustKernel::Tukey, 0.1, 0.05), 0.0);
        assert!((robust_weight(RobustKernel::Tukey, 0.025, 0.05) - 0.5625).abs() < 1e-15);
    }

    #[test]
    fn weight_is_derivative_ratio_of_cost() {
        for kernel in [RobustKernel::Huber, RobustKernel::Tukey] {
            for &r in &[0.003, 0.02, 0.04, 0.07, -0.03] {
                let h = 1e-7;
                let d = (robust_cost(kernel, r + h, 0.05) - robust_cost(kernel, r - h, 0.05)) / (2.0 * h);
                assert!((d / r - robust_weight(kernel, r, 0.05)).abs() < 1e-6);
            }
        }
    }
}
