use rayon::prelude::*;

use super::{RenderedView, TriangleMesh};
use crate::image::Image;
use crate::math::{PinholeIntrinsics, RigidTransform, Vec3};

const BAND_ROWS: usize = 8;

/// Nearest ray-triangle intersection for one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshHit {
    pub face: usize,
    /// Weights of the face's three vertices.
    pub barycentric: [f64; 3],
    pub depth: f64,
}

/// Möller-Trumbore test of a ray from the camera center. Returns `(t, b1, b2)`.
#[inline]
fn intersect(dir: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<(f64, f64, f64)> {
    let e1 = b - a;
    let e2 = c - a;
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = -a;
    let b1 = s.dot(&p) * inv;
    let slack = 1e-10;
    if b1 < -slack || b1 > 1.0 + slack {
        return None;
    }
    let q = s.cross(&e1);
    let b2 = dir.dot(&q) * inv;
    if b2 < -slack || b1 + b2 > 1.0 + slack {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 1e-9).then_some((t, b1, b2))
}

/// Per-pixel nearest hit of `mesh` seen from `pose` (camera to world). Ties
/// go to the lower face index.
pub fn raycast_mesh_hits(
    mesh: &TriangleMesh,
    pose: &RigidTransform,
    intr: &PinholeIntrinsics,
) -> Image<Option<MeshHit>> {
    let (w, h) = (intr.width, intr.height);
    let to_cam = pose.inverse();
    let cam: Vec<Vec3> = mesh.vertices.iter().map(|v| to_cam.transform_point(v)).collect();

    // Conservative pixel bounding box of every face, binned by row band.
    let bands = h.div_ceil(BAND_ROWS);
    let mut binned: Vec<Vec<(usize, [usize; 4])>> = vec![Vec::new(); bands];
    for (f, face) in mesh.faces.iter().enumerate() {
        let pts = face.map(|i| cam[i as usize]);
        if pts.iter().all(|p| p.z <= 0.0) {
            continue;
        }
        let bbox = if pts.iter().all(|p| p.z > 0.0) {
            let px = pts.map(|p| (intr.fx * p.x / p.z + intr.cx, intr.fy * p.y / p.z + intr.cy));
            let lo_u = px.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor() - 1.0;
            let hi_u = px.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0;
            let lo_v = px.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() - 1.0;
            let hi_v = px.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() + 1.0;
            if hi_u < 0.0 || hi_v < 0.0 || lo_u >= w as f64 || lo_v >= h as f64 {
                continue;
            }
            [
                lo_u.max(0.0) as usize,
                (hi_u.min((w - 1) as f64)) as usize,
                lo_v.max(0.0) as usize,
                (hi_v.min((h - 1) as f64)) as usize,
            ]
        } else {
            [0, w - 1, 0, h - 1]
        };
        for band in bbox[2] / BAND_ROWS..=bbox[3] / BAND_ROWS {
            binned[band].push((f, bbox));
        }
    }

    let mut out = vec![None; w * h];
    out.par_chunks_mut(w * BAND_ROWS).enumerate().for_each(|(band, rows)| {
        for (f, bbox) in &binned[band] {
            let [a, b, c] = mesh.faces[*f].map(|i| cam[i as usize]);
            let v0 = bbox[2].max(band * BAND_ROWS);
            let v1 = bbox[3].min(band * BAND_ROWS + rows.len() / w - 1);
            for v in v0..=v1 {
                for u in bbox[0]..=bbox[1] {
                    let dir = intr.ray(u as f64, v as f64);
                    let Some((t, b1, b2)) = intersect(&dir, &a, &b, &c) else { continue };
                    let slot: &mut Option<MeshHit> = &mut rows[(v - band * BAND_ROWS) * w + u];
                    if slot.is_none_or(|hit| t < hit.depth) {
                        *slot = Some(MeshHit { face: *f, barycentric: [1.0 - b1 - b2, b1, b2], depth: t });
                    }
                }
            }
        }
    });
    Image::from_vec(w, h, out)
}

/// Renders depth, camera-frame normals and color of a mesh by exact
/// nearest-hit ray casting with barycentric attribute interpolation.
pub fn raycast_mesh(mesh: &TriangleMesh, pose: &RigidTransform, intr: &PinholeIntrinsics) -> RenderedView {
    let hits = raycast_mesh_hits(mesh, pose, intr);
    let mut view = RenderedView::empty(*pose, *intr);
    let to_cam = pose.rotation.transpose();
    for (i, hit) in hits.data.iter().enumerate() {
        let Some(hit) = hit else { continue };
        let face = mesh.faces[hit.face];
        view.depth.data[i] = hit.depth;
        let n: Vec3 = (0..3).map(|k| mesh.normals[face[k] as usize] * hit.barycentric[k]).sum();
        let n = to_cam * n;
        let dir = intr.ray((i % intr.width) as f64, (i / intr.width) as f64);
        view.normals.data[i] = (n.norm() > 0.0).then(|| {
            let n = n.normalize();
            if n.dot(&dir) > 0.0 {
                -n
            } else {
                n
            }
        });
        view.color.data[i] = match &mesh.colors {
            Some(colors) => std::array::from_fn(|ch| {
                (0..3)
                    .map(|k| colors[face[k] as usize][ch] as f64 * hit.barycentric[k])
                    .sum::<f64>()
                    .round()
                    .clamp(0.0, 255.0) as u8
            }),
            None => [128; 3],
        };
    }
    view.refresh_intensity();
    view
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> PinholeIntrinsics {
        PinholeIntrinsics::new(40.0, 40.0, 15.5, 11.5, 32, 24).unwrap()
    }

    fn big_triangle(z: f64) -> TriangleMesh {
        TriangleMesh::from_faces(
            vec![Vec3::new(-10.0, -10.0, z), Vec3::new(10.0, -10.0, z), Vec3::new(0.0, 10.0, z)],
            vec![[0, 1, 2]],
        )
    }

    #[test]
    fn triangle_covering_image() {
        let view = raycast_mesh(&big_triangle(2.0), &RigidTransform::identity(), &intr());
        assert_eq!(view.valid_count(), 32 * 24);
        for (d, n) in view.depth.data.iter().zip(&view.normals.data) {
            assert!((d - 2.0).abs() < 1e-6);
            assert!((n.unwrap() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn nearest_hit_wins_and_misses_are_invalid() {
        let mut mesh = big_triangle(2.0);
        let front = big_triangle(1.0);
        mesh.vertices.extend(front.vertices);
        mesh.normals.extend(front.normals);
        mesh.faces.push([3, 4, 5]);
        let view = raycast_mesh(&mesh, &RigidTransform::identity(), &intr());
        assert!(view.depth.data.iter().all(|d| (d - 1.0).abs() < 1e-9));

        let small = TriangleMesh::from_faces(
            vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(0.05, 0.0, 1.0), Vec3::new(0.0, 0.05, 1.0)],
            vec![[0, 1, 2]],
        );
        let view = raycast_mesh(&small, &RigidTransform::identity(), &intr());
        assert_eq!(*view.depth.get(0, 0), 0.0);
        assert!(view.normals.get(0, 0).is_none());
        assert!(view.valid_count() > 0);
    }

    #[test]
    fn behind_camera_is_ignored() {
        let view = raycast_mesh(&big_triangle(-1.0), &RigidTransform::identity(), &intr());
        assert_eq!(view.valid_count(), 0);
    }
}
