use rayon::prelude::*;

use crate::image::{ColorImage, DepthImage, Image, IntensityImage, NormalMap};
use crate::math::{PinholeIntrinsics, RigidTransform, Vec3};
use crate::surface::RenderedView;
use crate::tracker::ViewSource;

const MAX_STEPS: usize = 256;
const HIT_EPS: f64 = 1e-5;

/// Analytic solid. Signed distance is positive outside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { center: Vec3, radius: f64 },
    /// Half-space behind the plane through `point`; `normal` (unit) points
    /// into free space.
    Plane { point: Vec3, normal: Vec3 },
}

impl Shape {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (p - center).norm() - radius,
            Shape::Plane { point, normal } => normal.dot(&(p - point)),
        }
    }

    pub fn normal(&self, p: &Vec3) -> Vec3 {
        match self {
            Shape::Sphere { center, .. } => (p - center).normalize(),
            Shape::Plane { normal, .. } => *normal,
        }
    }
}

/// Smooth world-space intensity pattern in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    /// Angular frequency, radians per meter.
    pub frequency: f64,
    pub contrast: f64,
}

impl Default for Texture {
    fn default() -> Self {
        Self { frequency: 8.0, contrast: 0.6 }
    }
}

impl Texture {
    pub fn intensity(&self, p: &Vec3) -> f64 {
        let f = self.frequency;
        let v = (f * p.x).sin() * (f * p.y).cos() + (0.7 * f * p.z + 0.6 * f * p.x + 1.3).sin();
        (0.5 + 0.25 * self.contrast * v).clamp(0.0, 1.0)
    }
}

/// Union of analytic shapes with a procedural texture.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub shapes: Vec<Shape>,
    pub texture: Texture,
}

struct SceneHit {
    depth: f64,
    point: Vec3,
    shape: usize,
}

impl SyntheticScene {
    pub fn new(shapes: Vec<Shape>) -> Self {
        assert!(!shapes.is_empty(), "scene needs at least one shape");
        Self { shapes, texture: Texture::default() }
    }

    /// Sphere of radius 0.25 m resting in front of a wall, both about 1.5 m
    /// ahead of a camera at the origin looking down +z.
    pub fn sphere_and_plane() -> Self {
        Self::new(vec![
            Shape::Sphere { center: Vec3::new(0.05, 0.0, 1.5), radius: 0.25 },
            Shape::Plane { point: Vec3::new(0.0, 0.0, 2.0), normal: Vec3::new(0.0, 0.15, -1.0).normalize() },
        ])
    }

    fn sdf(&self, p: &Vec3) -> (f64, usize) {
        self.shapes.iter().enumerate().map(|(i, s)| (s.sdf(p), i)).fold((f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
    }

    /// Sphere tracing followed by Newton refinement on the nearest shape.
    /// `dir` has unit camera-frame z, so the ray parameter is the depth.
    fn trace(&self, origin: &Vec3, dir: &Vec3, far: f64) -> Option<SceneHit> {
        let len = dir.norm();
        let mut t = 0.0;
        let mut hit = None;
        for _ in 0..MAX_STEPS {
            let (d, i) = self.sdf(&(origin + dir * t));
            if d.abs() < HIT_EPS {
                hit = Some(i);
                break;
            }
            if d < 0.0 {
                // Started inside a solid.
                return None;
            }
            t += d / len;
            if t > far {
                return None;
            }
        }
        let shape = &self.shapes[hit?];
        for _ in 0..8 {
            let p = origin + dir * t;
            let slope = shape.normal(&p).dot(dir);
            if slope.abs() < 1e-12 {
                break;
            }
            let dt = shape.sdf(&p) / slope;
            t -= dt;
            if dt.abs() < 1e-14 {
                break;
            }
        }
        let point = origin + dir * t;
        Some(SceneHit { depth: t, point, shape: hit? })
    }

    /// Depth, normals (camera frame), color and exact intensity seen from
    /// `pose` (camera to world).
    pub fn render_view(&self, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView {
        let (w, h) = (intr.width, intr.height);
        let origin = pose.translation;
        let inv_rot = pose.rotation.transpose();
        let pixels: Vec<Option<(f64, Vec3, f64)>> = (0..w * h)
            .into_par_iter()
            .map(|i| {
                let (u, v) = (i % w, i / w);
                let dir = pose.rotation * intr.ray(u as f64, v as f64);
                let hit = self.trace(&origin, &dir, 50.0)?;
                let mut n = inv_rot * self.shapes[hit.shape].normal(&hit.point);
                if n.dot(&intr.ray(u as f64, v as f64)) > 0.0 {
                    n = -n;
                }
                Some((hit.depth, n, self.texture.intensity(&hit.point)))
            })
            .collect();
        let depth: DepthImage = Image::from_vec(w, h, pixels.iter().map(|p| p.map_or(0.0, |p| p.0)).collect());
        let normals: NormalMap = Image::from_vec(w, h, pixels.iter().map(|p| p.map(|p| p.1)).collect());
        let intensity: IntensityImage = Image::from_vec(w, h, pixels.iter().map(|p| p.map_or(0.0, |p| p.2)).collect());
        let color: ColorImage = Image::from_vec(
            w,
            h,
            intensity.data.iter().map(|i| [(i * 255.0).round() as u8; 3]).collect(),
        );
        RenderedView { depth, normals, color, intensity, pose: *pose, intr: *intr }
    }
}

impl ViewSource for SyntheticScene {
    fn render(&self, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView {
        self.render_view(pose, intr)
    }
}

/// Depth image of the union of `shapes`; 0 where no surface is hit.
pub fn render_synthetic_scene(shapes: &[Shape], pose: &RigidTransform, intr: &PinholeIntrinsics) -> DepthImage {
    SyntheticScene::new(shapes.to_vec()).render_view(pose, intr).depth
}
