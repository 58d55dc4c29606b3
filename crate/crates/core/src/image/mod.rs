//! Per-frame preprocessing: denoising, pyramids, normal maps and gradients.

mod filter;
mod normals;
mod pyramid;

pub use filter::{bilateral_filter, gaussian_blur, gaussian_blur_depth, BilateralParams, BINOMIAL_5};
pub use normals::compute_normals;
pub use pyramid::{build_pyramid, build_pyramid_from_intensity, FramePyramid, PyramidLevel, NORMAL_STEP};

use crate::math::{Vec2, Vec3};

/// Row-major image with `width * height` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// Depth in meters; `0.0` marks a missing measurement.
pub type DepthImage = Image<f64>;
/// Intensity in `[0, 1]`.
pub type IntensityImage = Image<f64>;
pub type ColorImage = Image<[u8; 3]>;
/// Unit normals per pixel; `None` marks an invalid pixel.
pub type NormalMap = Image<Option<Vec3>>;

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }
}

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "image buffer size mismatch");
        Self { width, height, data }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    pub fn row(&self, v: usize) -> &[T] {
        &self.data[v * self.width..(v + 1) * self.width]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

impl Image<f64> {
    /// Bilinear sample at a continuous pixel position. Returns `None` when the
    /// 2x2 support leaves the image.
    pub fn bilinear(&self, u: f64, v: f64) -> Option<f64> {
        self.bilinear_with_gradient(u, v).map(|(val, _)| val)
    }

    /// Bilinear sample plus the exact derivative of the interpolant with
    /// respect to `(u, v)`.
    pub fn bilinear_with_gradient(&self, u: f64, v: f64) -> Option<(f64, Vec2)> {
        let (max_u, max_v) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        if !(u >= 0.0 && v >= 0.0 && u <= max_u && v <= max_v) || self.width < 2 || self.height < 2 {
            return None;
        }
        // Points on the last row/column use the cell to their left/top.
        let u0 = (u.floor() as usize).min(self.width - 2);
        let v0 = (v.floor() as usize).min(self.height - 2);
        let (fu, fv) = (u - u0 as f64, v - v0 as f64);
        let i00 = *self.get(u0, v0);
        let i10 = *self.get(u0 + 1, v0);
        let i01 = *self.get(u0, v0 + 1);
        let i11 = *self.get(u0 + 1, v0 + 1);
        let top = i00 + (i10 - i00) * fu;
        let bottom = i01 + (i11 - i01) * fu;
        let val = top + (bottom - top) * fv;
        let du = (i10 - i00) * (1.0 - fv) + (i11 - i01) * fv;
        let dv = bottom - top;
        Some((val, Vec2::new(du, dv)))
    }
}

/// Luma conversion `(0.299 R + 0.587 G + 0.114 B) / 255`.
pub fn intensity_from_rgb(color: &ColorImage) -> IntensityImage {
    let data = color
        .data
        .iter()
        .map(|&[r, g, b]| {
            ((0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0).clamp(0.0, 1.0)
        })
        .collect();
    Image::from_vec(color.width, color.height, data)
}

/// Central-difference gradient `(∂I/∂u, ∂I/∂v)`, one-sided on the border.
pub fn image_gradient(img: &IntensityImage) -> Image<Vec2> {
    let (w, h) = img.dims();
    assert!(w >= 3 && h >= 3, "image_gradient needs at least 3x3 input");
    let diff = |a: f64, b: f64, span: f64| (a - b) / span;
    Image::from_fn(w, h, |u, v| {
        let gx = if u == 0 {
            diff(*img.get(1, v), *img.get(0, v), 1.0)
        } else if u == w - 1 {
            diff(*img.get(w - 1, v), *img.get(w - 2, v), 1.0)
        } else {
            diff(*img.get(u + 1, v), *img.get(u - 1, v), 2.0)
        };
        let gy = if v == 0 {
            diff(*img.get(u, 1), *img.get(u, 0), 1.0)
        } else if v == h - 1 {
            diff(*img.get(u, h - 1), *img.get(u, h - 2), 1.0)
        } else {
            diff(*img.get(u, v + 1), *img.get(u, v - 1), 2.0)
        };
        Vec2::new(gx, gy)
    })
}
