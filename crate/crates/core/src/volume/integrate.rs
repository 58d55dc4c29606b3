use rayon::prelude::*;

use super::{BlockCoord, HashedTsdfVolume, VOXELS_PER_BLOCK};
use crate::image::{compute_normals, ColorImage, DepthImage, NormalMap};
use crate::math::{PinholeIntrinsics, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IntegrationStats {
    /// Voxels whose value was updated by this frame.
    pub updated_voxels: usize,
    pub allocated_blocks: usize,
    pub visited_blocks: usize,
}

/// Fuses one frame into the volume. `pose` maps camera to world coordinates.
/// Normals used for sample weighting are estimated from `depth`.
pub fn integrate_frame(
    vol: &mut HashedTsdfVolume,
    depth: &DepthImage,
    color: &ColorImage,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
) -> IntegrationStats {
    let normals = compute_normals(depth, intr, 1);
    integrate_frame_with_normals(vol, depth, color, &normals, pose, intr)
}

/// Amanatides-Woo traversal of the unit grid cells hit by segment `a -> b`.
fn traverse_cells(a: &Vec3, b: &Vec3, out: &mut Vec<BlockCoord>) {
    let dir = b - a;
    let mut cell = [a.x.floor() as i32, a.y.floor() as i32, a.z.floor() as i32];
    let last = [b.x.floor() as i32, b.y.floor() as i32, b.z.floor() as i32];
    let mut step = [0i32; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for i in 0..3 {
        if dir[i] > 0.0 {
            step[i] = 1;
            t_max[i] = ((cell[i] + 1) as f64 - a[i]) / dir[i];
            t_delta[i] = 1.0 / dir[i];
        } else if dir[i] < 0.0 {
            step[i] = -1;
            t_max[i] = (cell[i] as f64 - a[i]) / dir[i];
            t_delta[i] = -1.0 / dir[i];
        }
    }
    let budget: i32 = (0..3).map(|i| (last[i] - cell[i]).abs()).sum::<i32>() + 1;
    out.push(cell);
    for _ in 0..budget {
        if cell == last {
            break;
        }
        let axis = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
            0
        } else if t_max[1] <= t_max[2] {
            1
        } else {
            2
        };
        if t_max[axis] > 1.0 {
            break;
        }
        cell[axis] += step[axis];
        t_max[axis] += t_delta[axis];
        out.push(cell);
    }
}

/// Blocks crossed by the truncation band around every valid depth sample.
fn blocks_in_band(
    vol: &HashedTsdfVolume,
    depth: &DepthImage,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
) -> Vec<BlockCoord> {
    let tau = vol.truncation();
    let extent = vol.block_extent();
    let half = 0.5 * vol.voxel_size();
    let to_block_space = |p: Vec3| (p.add_scalar(half)) / extent;
    let mut coords: Vec<BlockCoord> = (0..depth.height)
        .into_par_iter()
        .flat_map_iter(|v| {
            let mut row = Vec::new();
            for u in 0..depth.width {
                let d = *depth.get(u, v);
                if !(d > 0.0) {
                    continue;
                }
                let ray = intr.ray(u as f64, v as f64);
                let near = pose.transform_point(&(ray * (d - tau).max(0.0)));
                let far = pose.transform_point(&(ray * (d + tau)));
                traverse_cells(&to_block_space(near), &to_block_space(far), &mut row);
            }
            row.sort_unstable();
            row.dedup();
            row
        })
        .collect();
    coords.sort_unstable();
    coords.dedup();
    coords
}

/// Like [`integrate_frame`] with caller-supplied camera-frame normals.
pub fn integrate_frame_with_normals(
    vol: &mut HashedTsdfVolume,
    depth: &DepthImage,
    color: &ColorImage,
    normals: &NormalMap,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
) -> IntegrationStats {
    assert_eq!(depth.dims(), (intr.width, intr.height), "depth size differs from intrinsics");
    assert_eq!(color.dims(), depth.dims(), "color size differs from depth");
    assert_eq!(normals.dims(), depth.dims(), "normal map size differs from depth");

    let coords = blocks_in_band(vol, depth, pose, intr);
    let before = vol.block_count();
    let mut visit = vec![false; before + coords.len()];
    for c in &coords {
        let idx = vol.allocate_block(*c);
        visit[idx] = true;
    }
    let allocated_blocks = vol.block_count() - before;

    let cfg = *vol.config();
    let world_to_cam = pose.inverse();
    let inv_tau = 1.0 / cfg.truncation;
    let updated_voxels: usize = vol
        .blocks_mut()
        .par_iter_mut()
        .enumerate()
        .filter(|(i, _)| visit[*i])
        .map(|(_, block)| {
            let mut n_updated = 0;
            for idx in 0..VOXELS_PER_BLOCK {
                let g = block.voxel_coord(idx);
                let center = Vec3::new(g[0] as f64, g[1] as f64, g[2] as f64) * cfg.voxel_size;
                let pc = world_to_cam.transform_point(&center);
                let Some((u, v)) = intr.nearest_pixel(&pc) else { continue };
                let measured = *depth.get(u, v);
                if !(measured > 0.0) {
                    continue;
                }
                let sdf = measured - pc.z;
                if sdf.abs() > cfg.truncation {
                    continue;
                }
                let ray_dir = intr.ray(u as f64, v as f64).normalize();
                let w = match normals.get(u, v) {
                    Some(n) => (-n.dot(&ray_dir)).max(cfg.min_sample_weight),
                    None => cfg.min_sample_weight,
                };
                let voxel = &mut block.voxels[idx];
                let w_old = voxel.weight as f64;
                let total = w_old + w;
                let tsdf = (w_old * voxel.tsdf as f64 + w * sdf * inv_tau) / total;
                let c = color.get(u, v);
                for ch in 0..3 {
                    let mixed = (w_old * voxel.color[ch] as f64 + w * c[ch] as f64) / total;
                    voxel.color[ch] = mixed.round().clamp(0.0, 255.0) as u8;
                }
                voxel.tsdf = tsdf.clamp(-1.0, 1.0) as f32;
                voxel.weight = total.min(cfg.max_weight) as f32;
                n_updated += 1;
            }
            n_updated
        })
        .sum();

    IntegrationStats { updated_voxels, allocated_blocks, visited_blocks: coords.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Image;
    use crate::volume::VolumeConfig;

    fn plane_frame(z: f64) -> (DepthImage, ColorImage, PinholeIntrinsics) {
        let intr = PinholeIntrinsics::new(100.0, 100.0, 31.5, 23.5, 64, 48).unwrap();
        (Image::filled(64, 48, z), Image::filled(64, 48, [200, 100, 50]), intr)
    }

    #[test]
    fn dda_visits_contiguous_cells() {
        let mut out = Vec::new();
        traverse_cells(&Vec3::new(0.5, 0.5, 0.5), &Vec3::new(3.2, 1.7, -0.4), &mut out);
        assert_eq!(out.first(), Some(&[0, 0, 0]));
        assert_eq!(out.last(), Some(&[3, 1, -1]));
        for w in out.windows(2) {
            let d: i32 = (0..3).map(|i| (w[1][i] - w[0][i]).abs()).sum();
            assert_eq!(d, 1);
        }
    }

    #[test]
    fn plane_surface_voxel_is_zero() {
        let (depth, color, intr) = plane_frame(1.0);
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        let stats = integrate_frame(&mut vol, &depth, &color, &RigidTransform::identity(), &intr);
        assert!(stats.updated_voxels > 0);
        let v = vol.voxel([0, 0, 100]).unwrap();
        assert!(v.weight > 0.0);
        assert!((v.tsdf as f64).abs() <= 0.01 / (2.0 * 0.04));
        assert_eq!(v.color, [200, 100, 50]);
        // In front of the surface the distance is positive.
        assert!(vol.voxel([0, 0, 98]).unwrap().tsdf > 0.0);
        assert!(vol.voxel([0, 0, 102]).unwrap().tsdf < 0.0);
        // Two truncation distances behind the surface nothing is written.
        assert!(vol.voxel([0, 0, 108]).map_or(true, |v| v.weight == 0.0));
    }

    #[test]
    fn reintegration_doubles_weight() {
        let (depth, color, intr) = plane_frame(0.8);
        let cfg = VolumeConfig { max_weight: 1.5, ..VolumeConfig::default() };
        let mut vol = HashedTsdfVolume::new(cfg).unwrap();
        let pose = RigidTransform::identity();
        integrate_frame(&mut vol, &depth, &color, &pose, &intr);
        let first = vol.clone();
        integrate_frame(&mut vol, &depth, &color, &pose, &intr);
        assert_eq!(first.block_count(), vol.block_count());
        for (a, b) in first.blocks().iter().zip(vol.blocks()) {
            for (x, y) in a.voxels.iter().zip(b.voxels.iter()) {
                assert!((x.tsdf - y.tsdf).abs() < 1e-6);
                assert_eq!(y.weight, (2.0 * x.weight).min(1.5));
                assert_eq!(x.color, y.color);
            }
        }
    }

    #[test]
    fn planar_frame_is_sparse() {
        let intr = PinholeIntrinsics::new(525.0, 525.0, 319.5, 239.5, 640, 480).unwrap();
        let depth = Image::filled(640, 480, 2.0);
        let color = Image::filled(640, 480, [0u8; 3]);
        let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
        integrate_frame(&mut vol, &depth, &color, &RigidTransform::identity(), &intr);
        let allocated = vol.block_count() * VOXELS_PER_BLOCK;
        assert!((allocated as f64) < 0.05 * 512f64.powi(3));
    }

    #[test]
    fn deterministic_across_runs() {
        let (depth, color, intr) = plane_frame(1.2);
        let pose = RigidTransform::from_axis_angle(&Vec3::new(0.3, 1.0, 0.1), 0.2, Vec3::new(0.05, -0.02, 0.1));
        let run = || {
            let mut vol = HashedTsdfVolume::new(VolumeConfig::default()).unwrap();
            integrate_frame(&mut vol, &depth, &color, &pose, &intr);
            let mut buf = Vec::new();
            vol.write_to(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(), run());
    }
}
