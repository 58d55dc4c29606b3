//! ASCII PLY.
//!
//! Written layout: `vertex` element with `float x y z nx ny nz` and, when the
//! mesh has colors, `uchar red green blue`; `face` element with
//! `property list uchar int vertex_indices`. Floats use six decimals.
//! The reader accepts any property order, skips unknown scalar properties and
//! fan-triangulates polygons.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{io_err, DatasetError};
use crate::math::Vec3;
use crate::surface::TriangleMesh;

pub fn write_ply<W: Write>(mesh: &TriangleMesh, mut w: W) -> std::io::Result<()> {
    let colors = mesh.colors.as_ref();
    writeln!(w, "ply")?;
    writeln!(w, "format ascii 1.0")?;
    writeln!(w, "element vertex {}", mesh.vertex_count())?;
    for p in ["x", "y", "z", "nx", "ny", "nz"] {
        writeln!(w, "property float {p}")?;
    }
    if colors.is_some() {
        for p in ["red", "green", "blue"] {
            writeln!(w, "property uchar {p}")?;
        }
    }
    writeln!(w, "element face {}", mesh.face_count())?;
    writeln!(w, "property list uchar int vertex_indices")?;
    writeln!(w, "end_header")?;
    for (i, (v, n)) in mesh.vertices.iter().zip(&mesh.normals).enumerate() {
        write!(w, "{:.6} {:.6} {:.6} {:.6} {:.6} {:.6}", v.x, v.y, v.z, n.x, n.y, n.z)?;
        if let Some(c) = colors {
            let [r, g, b] = c[i];
            write!(w, " {r} {g} {b}")?;
        }
        writeln!(w)?;
    }
    for f in &mesh.faces {
        writeln!(w, "3 {} {} {}", f[0], f[1], f[2])?;
    }
    w.flush()
}

pub fn export_ply(mesh: &TriangleMesh, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    write_ply(mesh, BufWriter::new(file)).map_err(io_err(path))
}

fn malformed(msg: impl Into<String>) -> DatasetError {
    DatasetError::MalformedMesh(msg.into())
}

#[derive(Default)]
struct VertexLayout {
    props: Vec<String>,
}

impl VertexLayout {
    fn position(&self, name: &str) -> Option<usize> {
        self.props.iter().position(|p| p == name)
    }
}

pub fn read_ply<R: BufRead>(reader: R) -> Result<TriangleMesh, DatasetError> {
    let mut lines = reader.lines();
    let mut next_line = || -> Result<Option<String>, DatasetError> {
        lines.next().transpose().map_err(|e| malformed(format!("read failed: {e}")))
    };
    if next_line()?.as_deref().map(str::trim) != Some("ply") {
        return Err(malformed("missing `ply` magic"));
    }
    let mut vertex_count = None;
    let mut face_count = None;
    let mut layout = VertexLayout::default();
    let mut current = "";
    let mut saw_format = false;
    loop {
        let Some(line) = next_line()? else {
            return Err(malformed("header ended without `end_header`"));
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", "ascii", _] => saw_format = true,
            ["format", other, ..] => return Err(malformed(format!("unsupported format `{other}`"))),
            ["element", name, count] => {
                let n: usize = count.parse().map_err(|_| malformed(format!("bad element count `{count}`")))?;
                match *name {
                    "vertex" => {
                        vertex_count = Some(n);
                        current = "vertex";
                    }
                    "face" => {
                        face_count = Some(n);
                        current = "face";
                    }
                    _ if n == 0 => current = "other",
                    other => return Err(malformed(format!("unsupported element `{other}`"))),
                }
            }
            ["property", "list", _, _, name] => {
                if current != "face" || !matches!(*name, "vertex_indices" | "vertex_index") {
                    return Err(malformed(format!("unexpected list property `{name}`")));
                }
            }
            ["property", _, name] if current == "vertex" => layout.props.push(name.to_string()),
            ["property", ..] => return Err(malformed(format!("unexpected property line `{line}`"))),
            _ => return Err(malformed(format!("unrecognized header line `{line}`"))),
        }
    }
    if !saw_format {
        return Err(malformed("missing `format` line"));
    }
    let nv = vertex_count.ok_or_else(|| malformed("missing vertex element"))?;
    let nf = face_count.unwrap_or(0);
    let pos = ["x", "y", "z"].map(|p| layout.position(p));
    let [Some(ix), Some(iy), Some(iz)] = pos else {
        return Err(malformed("vertex element lacks x/y/z"));
    };
    let normal_idx = ["nx", "ny", "nz"].map(|p| layout.position(p));
    let color_idx = ["red", "green", "blue"].map(|p| layout.position(p));
    let has_normals = normal_idx.iter().all(Option::is_some);
    let has_colors = color_idx.iter().all(Option::is_some);

    let mut vertices = Vec::with_capacity(nv);
    let mut normals = Vec::with_capacity(if has_normals { nv } else { 0 });
    let mut colors = Vec::with_capacity(if has_colors { nv } else { 0 });
    for i in 0..nv {
        let line = next_line()?.ok_or_else(|| malformed(format!("expected {nv} vertices, got {i}")))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(format!("vertex {i}: unparseable value")))?;
        if vals.len() != layout.props.len() {
            return Err(malformed(format!("vertex {i}: expected {} values, got {}", layout.props.len(), vals.len())));
        }
        vertices.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        if has_normals {
            normals.push(Vec3::from_fn(|k, _| vals[normal_idx[k].unwrap()]));
        }
        if has_colors {
            colors.push(color_idx.map(|k| vals[k.unwrap()].clamp(0.0, 255.0) as u8));
        }
    }
    let mut faces = Vec::with_capacity(nf);
    for f in 0..nf {
        let line = next_line()?.ok_or_else(|| malformed(format!("expected {nf} faces, got {f}")))?;
        let idx: Vec<i64> = line
            .split_whitespace()
            .map(|t| t.parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|_| malformed(format!("face {f}: unparseable index")))?;
        let Some((&count, rest)) = idx.split_first() else {
            return Err(malformed(format!("face {f}: empty line")));
        };
        if count < 3 || rest.len() != count as usize {
            return Err(malformed(format!("face {f}: bad vertex list")));
        }
        if let Some(bad) = rest.iter().find(|&&k| k < 0 || k as usize >= nv) {
            return Err(malformed(format!("face {f}: index {bad} out of range for {nv} vertices")));
        }
        for k in 1..rest.len() - 1 {
            faces.push([rest[0] as u32, rest[k] as u32, rest[k + 1] as u32]);
        }
    }
    let mut mesh = if has_normals {
        TriangleMesh { vertices, normals, colors: None, faces }
    } else {
        TriangleMesh::from_faces(vertices, faces)
    };
    if has_colors {
        mesh.colors = Some(colors);
    }
    Ok(mesh)
}

pub fn import_ply(path: &Path) -> Result<TriangleMesh, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_ply(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::generate_synthetic_plane;

    fn unit_triangle() -> TriangleMesh {
        TriangleMesh::from_faces(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]])
    }

    fn roundtrip(mesh: &TriangleMesh) -> TriangleMesh {
        let mut buf = Vec::new();
        write_ply(mesh, &mut buf).unwrap();
        read_ply(buf.as_slice()).unwrap()
    }

    #[test]
    fn unit_triangle_roundtrip() {
        let mut mesh = unit_triangle();
        mesh.colors = Some(vec![[255, 0, 0], [0, 255, 0], [0, 0, 255]]);
        let back = roundtrip(&mesh);
        assert_eq!(back, mesh);
    }

    #[test]
    fn plane_roundtrip_keeps_topology() {
        let mesh = generate_synthetic_plane(21, 13, 0.6);
        let back = roundtrip(&mesh);
        assert_eq!(back.vertex_count(), 273);
        assert_eq!(back.face_count(), 480);
        assert_eq!(back.faces, mesh.faces);
        for (a, b) in back.vertices.iter().zip(&mesh.vertices) {
            assert!((a - b).amax() <= 1e-6);
        }
        assert!(back.colors.is_none());
    }

    #[test]
    fn out_of_range_index_is_malformed() {
        let text = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 3\n";
        assert!(matches!(read_ply(text.as_bytes()), Err(DatasetError::MalformedMesh(_))));
    }

    #[test]
    fn header_errors() {
        assert!(read_ply("plx\n".as_bytes()).is_err());
        let binary = "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n";
        assert!(read_ply(binary.as_bytes()).is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n";
        assert!(read_ply(truncated.as_bytes()).is_err());
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n4 0 1 2 3\n";
        let mesh = read_ply(text.as_bytes()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
        assert!((mesh.normals[0] - Vec3::z()).norm() < 1e-12);
    }
}
