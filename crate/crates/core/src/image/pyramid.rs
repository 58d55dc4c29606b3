use super::{compute_normals, gaussian_blur, gaussian_blur_depth, intensity_from_rgb};
use super::{ColorImage, DepthImage, Image, IntensityImage, NormalMap};
use crate::math::PinholeIntrinsics;

/// Pixel step used for normal estimation on every pyramid level.
pub const NORMAL_STEP: usize = 1;

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub depth: DepthImage,
    pub intensity: IntensityImage,
    pub normals: NormalMap,
    pub intr: PinholeIntrinsics,
}

/// Multi-resolution frame; `levels[0]` is full resolution.
#[derive(Debug, Clone)]
pub struct FramePyramid {
    pub levels: Vec<PyramidLevel>,
}

impl FramePyramid {
    pub fn finest(&self) -> &PyramidLevel {
        &self.levels[0]
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

fn subsample<T: Clone>(img: &Image<T>) -> Image<T> {
    Image::from_fn(img.width / 2, img.height / 2, |u, v| img.get(2 * u, 2 * v).clone())
}

/// Smooth-then-drop-odd-rows/columns pyramid. Intensity is derived from color
/// before downsampling and normals are recomputed on every level.
pub fn build_pyramid(
    depth: &DepthImage,
    color: &ColorImage,
    intr: &PinholeIntrinsics,
    levels: usize,
) -> FramePyramid {
    assert_eq!(depth.dims(), color.dims(), "depth and color sizes differ");
    build_pyramid_from_intensity(depth, &intensity_from_rgb(color), intr, levels)
}

/// Same as [`build_pyramid`] for a frame whose intensity is already known.
pub fn build_pyramid_from_intensity(
    depth: &DepthImage,
    intensity: &IntensityImage,
    intr: &PinholeIntrinsics,
    levels: usize,
) -> FramePyramid {
    assert!(levels >= 1, "pyramid needs at least one level");
    assert_eq!(depth.dims(), intensity.dims(), "depth and intensity sizes differ");
    assert_eq!(depth.dims(), (intr.width, intr.height), "image size differs from intrinsics");
    let mut out = Vec::with_capacity(levels);
    let mut d = depth.clone();
    let mut i = intensity.clone();
    for l in 0..levels {
        if l > 0 {
            d = subsample(&gaussian_blur_depth(&d));
            i = subsample(&gaussian_blur(&i));
        }
        let level_intr = intr.scaled(l);
        let normals = compute_normals(&d, &level_intr, NORMAL_STEP);
        out.push(PyramidLevel { depth: d.clone(), intensity: i.clone(), normals, intr: level_intr });
    }
    FramePyramid { levels: out }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    fn frame(w: usize, h: usize) -> (DepthImage, ColorImage, PinholeIntrinsics) {
        let depth = Image::from_fn(w, h, |u, v| 1.0 + 0.001 * (u + v) as f64);
        let color = Image::from_fn(w, h, |u, v| [(u % 256) as u8, (v % 256) as u8, 7]);
        let intr = PinholeIntrinsics::new(520.0, 520.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        (depth, color, intr)
    }

    #[test]
    fn single_level_is_input() {
        let (d, c, k) = frame(32, 24);
        let p = build_pyramid(&d, &c, &k, 1);
        assert_eq!(p.len(), 1);
        assert_eq!(p.levels[0].depth, d);
        assert_eq!(p.levels[0].intensity, intensity_from_rgb(&c));
        assert_eq!(p.levels[0].intr, k);
    }

    #[test]
    fn vga_sizes_and_intrinsics() {
        let (d, c, k) = frame(640, 480);
        let p = build_pyramid(&d, &c, &k, 3);
        let sizes: Vec<_> = p.levels.iter().map(|l| (l.depth.width, l.depth.height)).collect();
        assert_eq!(sizes, vec![(640, 480), (320, 240), (160, 120)]);
        assert_eq!(p.levels[2].intr.fx, 130.0);
        for l in &p.levels {
            assert_eq!(l.intensity.dims(), l.depth.dims());
            assert_eq!(l.normals.dims(), l.depth.dims());
            assert_eq!((l.intr.width, l.intr.height), l.depth.dims());
        }
    }

    #[test]
    fn odd_sizes_truncate() {
        let (d, c, k) = frame(37, 23);
        let p = build_pyramid(&d, &c, &k, 3);
        assert_eq!(p.levels[2].depth.dims(), (9, 5));
    }

    #[test]
    fn level_projection_halves() {
        let (_, _, k) = frame(640, 480);
        let pts = [Vec3::new(0.1, -0.2, 1.5), Vec3::new(-0.7, 0.4, 3.0), Vec3::new(0.0, 0.0, 0.8)];
        for l in 0..4 {
            let kl = k.scaled(l);
            for p in &pts {
                let a = k.project(p).unwrap() / (1u32 << l) as f64;
                let b = kl.project(p).unwrap();
                assert!((a - b).norm() <= 0.5);
            }
        }
    }
}
