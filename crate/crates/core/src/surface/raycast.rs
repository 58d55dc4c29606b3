use rayon::prelude::*;

use super::RenderedView;
use crate::math::{PinholeIntrinsics, RigidTransform, Vec3};
use crate::volume::{HashedTsdfVolume, BLOCK_SIDE};

/// Ray parameter interval along the optical axis, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { near: 0.2, far: 8.0 }
    }
}

struct Hit {
    depth: f64,
    normal: Option<Vec3>,
    color: [u8; 3],
}

/// Ray parameter at which `origin + t dir` leaves the block containing it.
fn block_exit(vol: &HashedTsdfVolume, origin: &Vec3, dir: &Vec3, t: f64) -> f64 {
    let p = origin + dir * t;
    let b = vol.block_at_point(&p);
    let vs = vol.voxel_size();
    let mut exit = f64::INFINITY;
    for axis in 0..3 {
        let lo = (b[axis] * BLOCK_SIDE) as f64 * vs - 0.5 * vs;
        let hi = lo + vol.block_extent();
        let te = if dir[axis] > 0.0 {
            (hi - origin[axis]) / dir[axis]
        } else if dir[axis] < 0.0 {
            (lo - origin[axis]) / dir[axis]
        } else {
            continue;
        };
        exit = exit.min(te);
    }
    exit
}

fn cast_ray(vol: &HashedTsdfVolume, origin: &Vec3, dir: &Vec3, range: &DepthRange) -> Option<Hit> {
    // `dir` has unit z in the camera frame, so t is the camera depth.
    let step = 0.5 * vol.truncation() / dir.norm();
    let mut t = range.near;
    let mut prev: Option<(f64, f64)> = None;
    while t <= range.far {
        let p = origin + dir * t;
        if vol.block(vol.block_at_point(&p)).is_none() {
            prev = None;
            t = block_exit(vol, origin, dir, t).max(t) + 1e-9;
            continue;
        }
        match vol.sample_tsdf(&p) {
            Some(f) => {
                if let Some((tp, fp)) = prev {
                    if fp > 0.0 && f <= 0.0 {
                        let t_hit = if fp - f > 0.0 { tp + (t - tp) * fp / (fp - f) } else { t };
                        let q = origin + dir * t_hit;
                        let color = vol.sample_color(&q).map_or([0; 3], |c| c.map(|x| x.round().clamp(0.0, 255.0) as u8));
                        return Some(Hit { depth: t_hit, normal: vol.sample_gradient(&q), color });
                    }
                }
                prev = Some((t, f));
            }
            None => prev = None,
        }
        t += step;
    }
    None
}

/// Renders the zero level set of the volume by marching each pixel ray in
/// steps of half the truncation distance and refining the first
/// outside-to-inside crossing linearly. Unallocated blocks are skipped whole.
pub fn raycast_volume(
    vol: &HashedTsdfVolume,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
    range: &DepthRange,
) -> RenderedView {
    assert!(range.near > 0.0 && range.far > range.near, "invalid depth range");
    let (w, h) = (intr.width, intr.height);
    let world_to_cam = pose.rotation.transpose();
    let hits: Vec<Option<Hit>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let dir = pose.rotation * intr.ray((i % w) as f64, (i / w) as f64);
            cast_ray(vol, &pose.translation, &dir, range)
        })
        .collect();
    let mut view = RenderedView::empty(*pose, *intr);
    for (i, hit) in hits.into_iter().enumerate() {
        if let Some(hit) = hit {
            view.depth.data[i] = hit.depth;
            view.normals.data[i] = hit.normal.map(|n| world_to_cam * n);
            view.color.data[i] = hit.color;
        }
    }
    view.refresh_intensity();
    view
}
