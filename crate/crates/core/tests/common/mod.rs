#![allow(dead_code)]

use std::path::Path;

use fuseforge::dataset::{write_tum_sequence, Shape, SyntheticScene, TrajectorySample};
use fuseforge::math::{PinholeIntrinsics, RigidTransform, Vec3};

/// Sphere and tilted wall plus a second sphere, so that no rigid motion
/// leaves the geometry unchanged.
pub fn busy_scene() -> SyntheticScene {
    let mut scene = SyntheticScene::sphere_and_plane();
    scene.shapes.push(Shape::Sphere { center: Vec3::new(-0.25, 0.1, 1.6), radius: 0.15 });
    scene
}

/// Camera sliding along x and turning slowly about y, 30 Hz timestamps.
pub fn camera_path(n: usize) -> Vec<TrajectorySample> {
    (0..n)
        .map(|i| {
            let s = i as f64;
            TrajectorySample {
                timestamp: 1.0 + s / 30.0,
                pose: RigidTransform::from_axis_angle(&Vec3::y(), 0.002 * s, Vec3::new(0.004 * s, 0.001 * s, 0.0)),
            }
        })
        .collect()
}

/// Renders `n` frames of the busy scene in TUM layout under `root`.
pub fn write_fixture(root: &Path, n: usize, intr: &PinholeIntrinsics) -> Vec<TrajectorySample> {
    let scene = busy_scene();
    let path = camera_path(n);
    let frames: Vec<_> = path
        .iter()
        .map(|s| {
            let view = scene.render_view(&s.pose, intr);
            (s.timestamp, view.depth, view.color)
        })
        .collect();
    write_tum_sequence(root, &frames, &path).unwrap();
    path
}
