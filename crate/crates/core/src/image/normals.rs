use rayon::prelude::*;

use super::{DepthImage, Image, NormalMap};
use crate::math::{PinholeIntrinsics, Vec3};

/// Normal map from the cross product of central differences of back-projected
/// neighbors `step` pixels away. Normals face the camera; pixels with a
/// missing or out-of-image neighbor are invalid.
pub fn compute_normals(depth: &DepthImage, intr: &PinholeIntrinsics, step: usize) -> NormalMap {
    assert!((1..=5).contains(&step), "normal step must be in 1..=5");
    let (w, h) = depth.dims();
    let point = |u: usize, v: usize| -> Option<Vec3> {
        let d = *depth.get(u, v);
        (d > 0.0).then(|| intr.backproject_unchecked(u as f64, v as f64, d))
    };
    let mut out = vec![None; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        if v < step || v + step >= h {
            return;
        }
        for (u, px) in row.iter_mut().enumerate().take(w.saturating_sub(step)).skip(step) {
            let (Some(c), Some(l), Some(r), Some(t), Some(b)) = (
                point(u, v),
                point(u - step, v),
                point(u + step, v),
                point(u, v - step),
                point(u, v + step),
            ) else {
                continue;
            };
            let n = (r - l).cross(&(b - t));
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                continue;
            }
            let n = n / len;
            *px = Some(if n.dot(&c) > 0.0 { -n } else { n });
        }
    });
    Image::from_vec(w, h, out)
}
