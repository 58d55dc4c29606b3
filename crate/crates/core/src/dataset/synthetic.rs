use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::{Vec3, Mat3};
use crate::surface::TriangleMesh;

/// Regular grid in the z = 0 plane centered on the origin: `cols` vertices
/// along x, `rows` along y, spacing `extent / (max(rows, cols) - 1)`.
/// Vertex `(r, c)` has index `r * cols + c`; faces wind counter-clockwise
/// seen from +z.
pub fn generate_synthetic_plane(rows: usize, cols: usize, extent: f64) -> TriangleMesh {
    assert!(rows >= 2 && cols >= 2, "plane needs at least 2x2 vertices");
    let spacing = extent / (rows.max(cols) - 1) as f64;
    let x0 = -0.5 * spacing * (cols - 1) as f64;
    let y0 = -0.5 * spacing * (rows - 1) as f64;
    let mut vertices = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            vertices.push(Vec3::new(x0 + c as f64 * spacing, y0 + r as f64 * spacing, 0.0));
        }
    }
    let mut faces = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let i = (r * cols + c) as u32;
            let up = i + cols as u32;
            faces.push([i, i + 1, up]);
            faces.push([i + 1, up + 1, up]);
        }
    }
    let n = vertices.len();
    TriangleMesh { vertices, normals: vec![Vec3::z(); n], colors: None, faces }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeformationKind {
    /// `z += a sin(2 pi x / L + phase)`, L the longest mesh side, phase a
    /// seed-chosen multiple of pi/2.
    Sinusoid,
    /// `z += s a v^2`, v the coordinate along the long axis scaled to [-1, 1].
    Bend,
    /// `z += s a |v|`: a crease across the middle of the long axis.
    Fold,
    /// Rotation about the long axis by `s a v` radians.
    Twist,
}

impl DeformationKind {
    pub const ALL: [DeformationKind; 4] = [Self::Sinusoid, Self::Bend, Self::Fold, Self::Twist];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sinusoid => "sinusoid",
            Self::Bend => "bend",
            Self::Fold => "fold",
            Self::Twist => "twist",
        }
    }
}

impl fmt::Display for DeformationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DeformationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown deformation `{s}` (expected sinusoid, bend, fold or twist)"))
    }
}

/// Analytic displacement of every vertex. The seed picks the sign (bend,
/// fold, twist) or the quarter-period phase (sinusoid) so that runs with the
/// same seed are bit-identical. Normals are recomputed from the faces.
pub fn apply_synthetic_deformation(mesh: &TriangleMesh, kind: DeformationKind, amplitude: f64, seed: u64) -> TriangleMesh {
    assert!(amplitude.is_finite(), "deformation amplitude must be finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let phase = rng.random_range(0..4u32) as f64 * FRAC_PI_2;

    let Some((lo, hi)) = mesh.bounding_box() else {
        return mesh.clone();
    };
    let size = hi - lo;
    let center = 0.5 * (lo + hi);
    // Long axis: x or y, whichever spans more.
    let long = if size.y > size.x { 1 } else { 0 };
    let half_long = 0.5 * size[long];
    let span = size.x.max(size.y);
    let along = |p: &Vec3| if half_long > 0.0 { (p[long] - center[long]) / half_long } else { 0.0 };

    let vertices = mesh
        .vertices
        .iter()
        .map(|p| match kind {
            DeformationKind::Sinusoid => {
                let dz = if span > 0.0 { amplitude * (TAU * (p.x - center.x) / span + phase).sin() } else { 0.0 };
                p + Vec3::z() * dz
            }
            DeformationKind::Bend => p + Vec3::z() * (sign * amplitude * along(p).powi(2)),
            DeformationKind::Fold => p + Vec3::z() * (sign * amplitude * along(p).abs()),
            DeformationKind::Twist => {
                let mut axis = Vec3::zeros();
                axis[long] = 1.0;
                let rot: Mat3 = nalgebra::Rotation3::from_axis_angle(
                    &nalgebra::Unit::new_unchecked(axis),
                    sign * amplitude * along(p),
                )
                .into_inner();
                let mut c = center;
                c[long] = p[long];
                c + rot * (p - c)
            }
        })
        .collect();
    let mut out = TriangleMesh { vertices, normals: mesh.normals.clone(), colors: mesh.colors.clone(), faces: mesh.faces.clone() };
    out.recompute_normals();
    out
}
