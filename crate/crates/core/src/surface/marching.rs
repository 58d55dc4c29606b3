use std::collections::HashMap;

use rayon::prelude::*;

use super::mc_tables::{CORNERS, EDGE_CORNERS, EDGE_TABLE, TRIANGLE_TABLE};
use super::TriangleMesh;
use crate::math::Vec3;
use crate::volume::{HashedTsdfVolume, Voxel, VoxelCoord, VOXELS_PER_BLOCK};

/// Lattice edge identified by its lower endpoint and axis (0 = x, 1 = y, 2 = z).
pub type EdgeKey = (VoxelCoord, u8);

struct EdgeVertex {
    key: EdgeKey,
    position: Vec3,
    color: [f64; 3],
}

#[derive(Default)]
struct BlockPatch {
    vertices: Vec<EdgeVertex>,
    triangles: Vec<[EdgeKey; 3]>,
}

fn offset(c: VoxelCoord, d: [i32; 3]) -> VoxelCoord {
    [c[0] + d[0], c[1] + d[1], c[2] + d[2]]
}

/// Places the crossing of lattice edge `a -> b` (a below b along one axis).
fn crossing(vol: &HashedTsdfVolume, a: (VoxelCoord, &Voxel), b: (VoxelCoord, &Voxel)) -> EdgeVertex {
    let axis = (0..3).find(|&k| a.0[k] != b.0[k]).unwrap() as u8;
    let (fa, fb) = (a.1.tsdf as f64, b.1.tsdf as f64);
    let t = if fa == fb { 0.5 } else { fa / (fa - fb) };
    let (pa, pb) = (vol.voxel_center(a.0), vol.voxel_center(b.0));
    let color = std::array::from_fn(|ch| a.1.color[ch] as f64 * (1.0 - t) + b.1.color[ch] as f64 * t);
    EdgeVertex { key: (a.0, axis), position: pa + (pb - pa) * t, color }
}

fn polygonize_block(vol: &HashedTsdfVolume, block_index: usize) -> BlockPatch {
    let block = &vol.blocks()[block_index];
    let mut patch = BlockPatch::default();
    for idx in 0..VOXELS_PER_BLOCK {
        let base = block.voxel_coord(idx);
        let mut corners: [(VoxelCoord, &Voxel); 8] = [(base, &block.voxels[idx]); 8];
        let mut observed = true;
        for (i, slot) in corners.iter_mut().enumerate() {
            let c = offset(base, CORNERS[i]);
            match vol.voxel(c) {
                Some(v) if v.is_observed() => *slot = (c, v),
                _ => {
                    observed = false;
                    break;
                }
            }
        }
        if !observed {
            continue;
        }
        let case = (0..8).fold(0usize, |acc, i| acc | ((corners[i].1.tsdf < 0.0) as usize) << i);
        let edges = EDGE_TABLE[case];
        if edges == 0 {
            continue;
        }
        let mut keys: [Option<EdgeKey>; 12] = [None; 12];
        for (e, key) in keys.iter_mut().enumerate() {
            if edges & (1 << e) == 0 {
                continue;
            }
            let [i, j] = EDGE_CORNERS[e];
            let (lo, hi) = if corners[i].0 < corners[j].0 { (i, j) } else { (j, i) };
            let v = crossing(vol, corners[lo], corners[hi]);
            *key = Some(v.key);
            patch.vertices.push(v);
        }
        for tri in TRIANGLE_TABLE[case].chunks(3) {
            if tri[0] < 0 {
                break;
            }
            let k = |e: i8| keys[e as usize].expect("triangle uses an uncut edge");
            // The table winds triangles clockwise seen from outside (positive
            // side); reverse so normals follow the TSDF gradient.
            patch.triangles.push([k(tri[0]), k(tri[2]), k(tri[1])]);
        }
    }
    patch
}

/// Extracts the zero level set as an indexed mesh. Each lattice edge yields at
/// most one shared vertex; cubes touching an unobserved voxel are skipped.
pub fn marching_cubes(vol: &HashedTsdfVolume) -> TriangleMesh {
    let patches: Vec<BlockPatch> =
        (0..vol.block_count()).into_par_iter().map(|b| polygonize_block(vol, b)).collect();

    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut faces = Vec::new();
    for patch in patches {
        for v in patch.vertices {
            index.entry(v.key).or_insert_with(|| {
                vertices.push(v.position);
                colors.push(v.color.map(|c| c.round().clamp(0.0, 255.0) as u8));
                (vertices.len() - 1) as u32
            });
        }
        for tri in patch.triangles {
            let f = tri.map(|k| index[&k]);
            if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                faces.push(f);
            }
        }
    }

    let mut mesh = TriangleMesh { vertices, normals: Vec::new(), colors: Some(colors), faces };
    let fallback = {
        mesh.recompute_normals();
        std::mem::take(&mut mesh.normals)
    };
    mesh.normals = mesh
        .vertices
        .par_iter()
        .zip(fallback.par_iter())
        .map(|(p, f)| vol.sample_gradient(p).unwrap_or(*f))
        .collect();
    mesh
}
