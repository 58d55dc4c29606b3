use rayon::prelude::*;

use super::{robust_weight, RobustKernel, TrackerConfig};
use crate::image::PyramidLevel;
use crate::math::{RigidTransform, Vec3};
use crate::surface::RenderedView;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Live point in live camera coordinates.
    pub source_point: Vec3,
    /// Predicted model point, world coordinates.
    pub target_point: Vec3,
    /// Predicted model normal, world coordinates.
    pub target_normal: Vec3,
    pub robust_weight: f64,
}

impl Correspondence {
    /// Point-to-plane residual of the source mapped by `pose`.
    pub fn residual(&self, pose: &RigidTransform) -> f64 {
        (pose.transform_point(&self.source_point) - self.target_point).dot(&self.target_normal)
    }
}

/// Pairs each valid live pixel with the predicted surface at the pixel it
/// projects to under `guess`. Pairs farther apart than `dist_reject` or with
/// normals more than `angle_reject` apart are dropped. Output is row-major.
pub fn find_correspondences(
    live: &PyramidLevel,
    predicted: &RenderedView,
    guess: &RigidTransform,
    cfg: &TrackerConfig,
) -> Vec<Correspondence> {
    assert_eq!(live.depth.dims(), predicted.depth.dims(), "level sizes differ");
    let (w, h) = live.depth.dims();
    let live_to_pred = predicted.pose.inverse().compose(guess);
    let cos_gate = cfg.angle_reject.cos();
    (0..h)
        .into_par_iter()
        .flat_map_iter(|v| {
            let mut row = Vec::new();
            for u in 0..w {
                let d = *live.depth.get(u, v);
                let Some(n_live) = live.normals.get(u, v) else { continue };
                if !(d > 0.0) {
                    continue;
                }
                let p = live.intr.backproject_unchecked(u as f64, v as f64, d);
                let Some((pu, pv)) = predicted.intr.nearest_pixel(&live_to_pred.transform_point(&p)) else {
                    continue;
                };
                let (Some(target), Some(normal)) = (predicted.world_point(pu, pv), predicted.world_normal(pu, pv))
                else {
                    continue;
                };
                let q = guess.transform_point(&p);
                if (q - target).norm() > cfg.dist_reject {
                    continue;
                }
                if (guess.rotation * n_live).dot(&normal) < cos_gate {
                    continue;
                }
                let r = (q - target).dot(&normal);
                row.push(Correspondence {
                    source_point: p,
                    target_point: target,
                    target_normal: normal,
                    robust_weight: robust_weight(RobustKernel::Huber, r, cfg.huber_delta),
                });
            }
            row
        })
        .collect()
}
