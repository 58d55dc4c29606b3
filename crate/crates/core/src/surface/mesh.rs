use std::collections::HashMap;

use crate::math::{RigidTransform, Vec3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: u32, count: usize },
    #[error("{0} normals for {1} vertices")]
    NormalCount(usize, usize),
    #[error("{0} colors for {1} vertices")]
    ColorCount(usize, usize),
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("normal {0} is not unit length")]
    NotUnit(usize),
}

/// Indexed triangle surface with per-vertex normals and optional colors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Mesh with normals recomputed from the faces.
    pub fn from_faces(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Self {
        let mut mesh = Self { normals: vec![Vec3::z(); vertices.len()], vertices, colors: None, faces };
        mesh.recompute_normals();
        mesh
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len();
        if self.normals.len() != n {
            return Err(MeshError::NormalCount(self.normals.len(), n));
        }
        if let Some(c) = &self.colors {
            if c.len() != n {
                return Err(MeshError::ColorCount(c.len(), n));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        for (i, nrm) in self.normals.iter().enumerate() {
            if !((nrm.norm() - 1.0).abs() <= 1e-6) {
                return Err(MeshError::NotUnit(i));
            }
        }
        for (f, face) in self.faces.iter().enumerate() {
            for &index in face {
                if index as usize >= n {
                    return Err(MeshError::IndexOutOfRange { face: f, index, count: n });
                }
            }
        }
        Ok(())
    }

    pub fn triangle(&self, f: usize) -> [Vec3; 3] {
        self.faces[f].map(|i| self.vertices[i as usize])
    }

    /// Unnormalized face normal (twice the area) following the winding order.
    pub fn face_area_normal(&self, f: usize) -> Vec3 {
        let [a, b, c] = self.triangle(f);
        (b - a).cross(&(c - a))
    }

    /// Area-weighted vertex normals. Vertices without any non-degenerate face
    /// keep their previous normal.
    pub fn recompute_normals(&mut self) {
        let mut acc = vec![Vec3::zeros(); self.vertices.len()];
        for f in 0..self.faces.len() {
            let n = self.face_area_normal(f);
            for &i in &self.faces[f] {
                acc[i as usize] += n;
            }
        }
        self.normals.resize(self.vertices.len(), Vec3::z());
        for (dst, a) in self.normals.iter_mut().zip(acc) {
            let len = a.norm();
            if len > 0.0 {
                *dst = a / len;
            }
        }
    }

    pub fn transformed(&self, t: &RigidTransform) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| t.transform_point(v)).collect(),
            normals: self.normals.iter().map(|n| t.transform_vector(n)).collect(),
            colors: self.colors.clone(),
            faces: self.faces.clone(),
        }
    }

    /// Undirected edges with the number of faces using each, in sorted order.
    pub fn edge_use_counts(&self) -> Vec<((u32, u32), usize)> {
        let mut counts: HashMap<(u32, u32), usize> = HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut out: Vec<_> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// True when every edge is shared by exactly two faces.
    pub fn is_closed(&self) -> bool {
        !self.faces.is_empty() && self.edge_use_counts().iter().all(|(_, c)| *c == 2)
    }

    /// Euclidean distance from `p` to the closest point on any face, by
    /// exhaustive search. `None` for a mesh without faces.
    pub fn distance_to_surface(&self, p: &Vec3) -> Option<f64> {
        (0..self.face_count())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                (closest_point_on_triangle(p, &a, &b, &c) - p).norm()
            })
            .min_by(f64::total_cmp)
    }

    pub fn bounding_box(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }
}

/// Closest point to `p` on triangle `abc`, classifying `p` against the
/// vertex, edge and face Voronoi regions.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}
