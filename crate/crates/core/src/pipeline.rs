//! Frame-by-frame rigid reconstruction: filter, track against the fused
//! model, fuse.

use std::io::Write;

use crate::config::PipelineConfig;
use crate::dataset::TrajectorySample;
use crate::image::{bilateral_filter, build_pyramid, ColorImage, DepthImage, FramePyramid};
use crate::math::RigidTransform;
use crate::surface::{marching_cubes, TriangleMesh};
use crate::tracker::{track_frame, TrackError};
use crate::volume::{integrate_frame_with_normals, HashedTsdfVolume, VolumeError};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameStats {
    pub index: usize,
    pub timestamp: f64,
    pub tracked: bool,
    /// Geometric correspondences at the last linearization of the finest level.
    pub correspondences: usize,
    /// Gauss-Newton iterations summed over levels.
    pub iterations: usize,
    /// Median absolute point-to-plane residual at the end of the finest level, meters.
    pub median_residual: f64,
    pub updated_voxels: usize,
}

/// Owns the volume and the pose history of one reconstruction run.
pub struct RigidPipeline {
    cfg: PipelineConfig,
    volume: HashedTsdfVolume,
    pose: RigidTransform,
    trajectory: Vec<TrajectorySample>,
    stats: Vec<FrameStats>,
}

impl RigidPipeline {
    /// The first frame is fused at `initial_pose` without tracking.
    pub fn new(cfg: PipelineConfig, initial_pose: RigidTransform) -> Result<Self, VolumeError> {
        let volume = HashedTsdfVolume::new(cfg.volume)?;
        Ok(Self { cfg, volume, pose: initial_pose, trajectory: Vec::new(), stats: Vec::new() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn volume(&self) -> &HashedTsdfVolume {
        &self.volume
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn trajectory(&self) -> &[TrajectorySample] {
        &self.trajectory
    }

    pub fn stats(&self) -> &[FrameStats] {
        &self.stats
    }

    /// Bilateral-filtered depth pyramid with one level per tracker level.
    pub fn preprocess(&self, depth: &DepthImage, color: &ColorImage) -> FramePyramid {
        let filtered = bilateral_filter(depth, &self.cfg.filter);
        build_pyramid(&filtered, color, &self.cfg.intrinsics, self.cfg.tracker.levels())
    }

    /// Tracks and fuses one frame. On a tracking failure the previous pose is
    /// kept (and recorded in the trajectory), the frame is not fused, and the
    /// error is returned after the bookkeeping.
    pub fn process_frame(&mut self, timestamp: f64, depth: &DepthImage, color: &ColorImage) -> Result<&FrameStats, TrackError> {
        let pyramid = self.preprocess(depth, color);
        let index = self.stats.len();
        let mut stats = FrameStats {
            index,
            timestamp,
            tracked: true,
            correspondences: 0,
            iterations: 0,
            median_residual: 0.0,
            updated_voxels: 0,
        };
        let mut failure = None;
        if index > 0 {
            match track_frame(&pyramid, &self.volume, &self.pose, &self.cfg.tracker) {
                Ok(res) => {
                    stats.correspondences = res.final_correspondences();
                    stats.iterations = res.levels.iter().map(|l| l.iterations).sum();
                    stats.median_residual = res.levels.last().and_then(|l| l.median_residual.last().copied()).unwrap_or(0.0);
                    self.pose = res.pose;
                }
                Err(e) => {
                    stats.tracked = false;
                    failure = Some(e);
                }
            }
        }
        if stats.tracked {
            let normals = &pyramid.finest().normals;
            let fused = integrate_frame_with_normals(&mut self.volume, depth, color, normals, &self.pose, &self.cfg.intrinsics);
            stats.updated_voxels = fused.updated_voxels;
        }
        self.trajectory.push(TrajectorySample { timestamp, pose: self.pose });
        self.stats.push(stats);
        match failure {
            Some(e) => Err(e),
            None => Ok(self.stats.last().expect("just pushed")),
        }
    }

    pub fn extract_mesh(&self) -> TriangleMesh {
        marching_cubes(&self.volume)
    }
}

/// CSV with header `frame,timestamp,tracked,correspondences,iterations,median_residual_m,updated_voxels`.
pub fn write_frame_stats_csv<W: Write>(stats: &[FrameStats], mut w: W) -> std::io::Result<()> {
    writeln!(w, "frame,timestamp,tracked,correspondences,iterations,median_residual_m,updated_voxels")?;
    for s in stats {
        writeln!(
            w,
            "{},{:.6},{},{},{},{:e},{}",
            s.index, s.timestamp, s.tracked as u8, s.correspondences, s.iterations, s.median_residual, s.updated_voxels
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Shape, SyntheticScene};
    use crate::math::{PinholeIntrinsics, Vec3};

    fn small_config() -> PipelineConfig {
        let mut cfg = PipelineConfig::default();
        cfg.intrinsics = PinholeIntrinsics::new(130.0, 130.0, 79.5, 59.5, 160, 120).unwrap();
        cfg.tracker.iters_per_level = vec![6, 4];
        cfg.tracker.min_correspondences = 100;
        cfg
    }

    /// Two spheres in front of a tilted wall: no motion leaves the geometry invariant.
    fn scene() -> SyntheticScene {
        let mut scene = SyntheticScene::sphere_and_plane();
        scene.shapes.push(Shape::Sphere { center: Vec3::new(-0.25, 0.1, 1.6), radius: 0.15 });
        scene
    }

    fn frame(scene: &SyntheticScene, pose: &RigidTransform, intr: &PinholeIntrinsics) -> (DepthImage, ColorImage) {
        let view = scene.render_view(pose, intr);
        (view.depth, view.color)
    }

    #[test]
    fn static_camera_keeps_its_pose() {
        let cfg = small_config();
        let scene = scene();
        let (d, c) = frame(&scene, &RigidTransform::identity(), &cfg.intrinsics);
        let mut p = RigidPipeline::new(cfg, RigidTransform::identity()).unwrap();
        for i in 0..3 {
            p.process_frame(i as f64, &d, &c).unwrap();
        }
        assert_eq!(p.trajectory().len(), 3);
        for s in p.trajectory() {
            assert!(s.pose.translation.norm() < 2e-3, "{:?}", s.pose.translation);
        }
        assert!(p.stats().iter().all(|s| s.tracked));
        assert!(p.stats()[0].updated_voxels > 0);
        assert!(!p.extract_mesh().is_empty());
    }

    #[test]
    fn failed_frame_keeps_pose_and_is_recorded() {
        let cfg = small_config();
        let scene = scene();
        let start = RigidTransform::from_translation(Vec3::new(0.01, 0.0, 0.0));
        let (d, c) = frame(&scene, &start, &cfg.intrinsics);
        let mut p = RigidPipeline::new(cfg.clone(), start).unwrap();
        p.process_frame(0.0, &d, &c).unwrap();
        let empty = DepthImage::filled(d.width, d.height, 0.0);
        assert!(p.process_frame(1.0, &empty, &c).is_err());
        assert_eq!(p.trajectory().len(), 2);
        assert_eq!(p.trajectory()[1].pose, start);
        assert!(!p.stats()[1].tracked);
        let mut csv = Vec::new();
        write_frame_stats_csv(p.stats(), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("1,1.000000,0,"));
    }
}
