//! Surface extraction and image synthesis.

mod marching;
mod mc_tables;
mod mesh;
mod mesh_raycast;
mod raycast;

pub use marching::{marching_cubes, EdgeKey};
pub use mc_tables::{CORNERS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};
pub use mesh::{closest_point_on_triangle, MeshError, TriangleMesh};
pub use mesh_raycast::{raycast_mesh, raycast_mesh_hits, MeshHit};
pub use raycast::{raycast_volume, DepthRange};

use crate::image::{intensity_from_rgb, ColorImage, DepthImage, IntensityImage, NormalMap};
use crate::math::{PinholeIntrinsics, RigidTransform, Vec3};

/// Synthesized depth, normals and color seen from `pose` (camera to world).
/// Normals are expressed in the camera frame.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub depth: DepthImage,
    pub normals: NormalMap,
    pub color: ColorImage,
    /// Intensity in `[0, 1]`; luma of `color` unless the renderer has an
    /// exact value.
    pub intensity: IntensityImage,
    pub pose: RigidTransform,
    pub intr: PinholeIntrinsics,
}

impl RenderedView {
    pub fn empty(pose: RigidTransform, intr: PinholeIntrinsics) -> Self {
        let (w, h) = (intr.width, intr.height);
        Self {
            depth: DepthImage::filled(w, h, 0.0),
            normals: NormalMap::filled(w, h, None),
            color: ColorImage::filled(w, h, [0; 3]),
            intensity: IntensityImage::filled(w, h, 0.0),
            pose,
            intr,
        }
    }

    pub fn camera_point(&self, u: usize, v: usize) -> Option<Vec3> {
        let d = *self.depth.get(u, v);
        (d > 0.0).then(|| self.intr.backproject_unchecked(u as f64, v as f64, d))
    }

    pub fn world_point(&self, u: usize, v: usize) -> Option<Vec3> {
        self.camera_point(u, v).map(|p| self.pose.transform_point(&p))
    }

    pub fn world_normal(&self, u: usize, v: usize) -> Option<Vec3> {
        self.normals.get(u, v).map(|n| self.pose.rotation * n)
    }

    /// Recomputes `intensity` from `color`.
    pub fn refresh_intensity(&mut self) {
        self.intensity = intensity_from_rgb(&self.color);
    }

    pub fn valid_count(&self) -> usize {
        self.depth.data.iter().filter(|d| **d > 0.0).count()
    }
}
