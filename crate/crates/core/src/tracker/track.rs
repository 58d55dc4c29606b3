use super::{
    build_geometric_system, build_photometric_system, find_correspondences, robust_cost, solve_step, RobustKernel,
    TrackError, TrackerConfig,
};
use crate::image::{FramePyramid, PyramidLevel};
use crate::math::{PinholeIntrinsics, RigidTransform, TwistMode};
use crate::surface::{raycast_mesh, raycast_volume, RenderedView, TriangleMesh};
use crate::volume::HashedTsdfVolume;

/// Anything that can synthesize the model as seen from a camera pose.
pub trait ViewSource {
    fn render(&self, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView;
}

impl ViewSource for HashedTsdfVolume {
    fn render(&self, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView {
        raycast_volume(self, pose, intr, &Default::default())
    }
}

impl ViewSource for TriangleMesh {
    fn render(&self, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView {
        raycast_mesh(self, pose, intr)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LevelStats {
    pub level: usize,
    pub iterations: usize,
    /// Geometric correspondences at each linearization, including the final one.
    pub correspondences: Vec<usize>,
    pub photometric_samples: Vec<usize>,
    /// Median absolute point-to-plane residual at each linearization.
    pub median_residual: Vec<f64>,
    pub energy: Vec<f64>,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackResult {
    pub pose: RigidTransform,
    /// Coarsest level first.
    pub levels: Vec<LevelStats>,
}

impl TrackResult {
    pub fn final_correspondences(&self) -> usize {
        self.levels.last().and_then(|l| l.correspondences.last().copied()).unwrap_or(0)
    }
}

struct Linearization {
    sys: super::NormalEquations6,
    energy: f64,
    correspondences: usize,
    photometric: usize,
    median: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.sort_unstable_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

fn linearize(
    level: &PyramidLevel,
    predicted: &RenderedView,
    pose: &RigidTransform,
    cfg: &TrackerConfig,
) -> Linearization {
    let corrs = find_correspondences(level, predicted, pose, cfg);
    let residuals: Vec<f64> = corrs.iter().map(|c| c.residual(pose)).collect();
    let geo_cost: f64 = residuals.iter().map(|r| 2.0 * robust_cost(RobustKernel::Huber, *r, cfg.huber_delta)).sum();
    let mut sys = build_geometric_system(&corrs, pose);
    let mut energy = if corrs.is_empty() { f64::INFINITY } else { geo_cost / corrs.len() as f64 };
    let mut photometric = 0;
    if cfg.lambda_photo > 0.0 {
        let (photo, n, sq) = build_photometric_system(level, predicted, pose, cfg);
        sys = sys.add(&photo.scaled(cfg.lambda_photo));
        photometric = n;
        if n > 0 {
            energy += cfg.lambda_photo * sq / n as f64;
        }
    }
    Linearization {
        sys,
        energy,
        correspondences: corrs.len(),
        photometric,
        median: median(residuals.iter().map(|r| r.abs()).collect()),
    }
}

/// Estimates the camera-to-world pose of `live` against the model, starting
/// from `prev_pose` and refining coarse to fine. Each level renders the model
/// once at the current estimate; Gauss-Newton steps are left-composed and a
/// step that raises the energy is retried with Levenberg-Marquardt damping.
pub fn track_frame<S: ViewSource + ?Sized>(
    live: &FramePyramid,
    source: &S,
    prev_pose: &RigidTransform,
    cfg: &TrackerConfig,
) -> Result<TrackResult, TrackError> {
    let n_levels = cfg.levels().min(live.len());
    let mut pose = *prev_pose;
    let mut stats = Vec::with_capacity(n_levels);
    for step in 0..n_levels {
        let level_idx = n_levels - 1 - step;
        let level = &live.levels[level_idx];
        let iters = cfg.iters_per_level[step + cfg.levels() - n_levels];
        let predicted = source.render(&pose, &level.intr);
        let mut st = LevelStats { level: level_idx, ..Default::default() };
        let mut lin = linearize(level, &predicted, &pose, cfg);
        st.correspondences.push(lin.correspondences);
        st.photometric_samples.push(lin.photometric);
        st.median_residual.push(lin.median);
        st.energy.push(lin.energy);
        let mut damping = 0.0;
        while st.iterations < iters && lin.correspondences >= 6 {
            let h = match solve_step(&lin.sys, damping) {
                Ok(h) => h,
                Err(_) if damping == 0.0 => {
                    damping = cfg.lm_tau * lin.sys.a.diagonal().max();
                    continue;
                }
                Err(e) => return Err(e),
            };
            let candidate = h.to_transform(TwistMode::SmallAngle).compose(&pose);
            let next = linearize(level, &predicted, &candidate, cfg);
            st.iterations += 1;
            if next.energy <= lin.energy {
                pose = candidate;
                lin = next;
                damping = 0.0;
                st.correspondences.push(lin.correspondences);
                st.photometric_samples.push(lin.photometric);
                st.median_residual.push(lin.median);
                st.energy.push(lin.energy);
                if h.norm() < 1e-6 {
                    break;
                }
            } else {
                st.rejected_steps += 1;
                damping = if damping == 0.0 { cfg.lm_tau * lin.sys.a.diagonal().max() } else { damping * 10.0 };
                if h.norm() < 1e-9 {
                    break;
                }
            }
        }
        let found = lin.correspondences;
        stats.push(st);
        if found == 0 || (level_idx == 0 && found < cfg.min_correspondences) {
            return Err(TrackError::TooFewCorrespondences {
                level: level_idx,
                found,
                required: if level_idx == 0 { cfg.min_correspondences } else { 1 },
            });
        }
    }
    let delta = prev_pose.inverse().compose(&pose);
    if delta.translation.norm() > cfg.max_translation_jump || delta.rotation_angle() > cfg.max_rotation_jump {
        return Err(TrackError::Diverged(format!(
            "moved {:.3} m / {:.1} deg in one frame",
            delta.translation.norm(),
            delta.rotation_angle().to_degrees()
        )));
    }
    Ok(TrackResult { pose: pose.orthonormalized(), levels: stats })
}
