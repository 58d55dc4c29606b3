use super::{MathError, Vec2, Vec3};

/// Pinhole camera model without distortion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PinholeIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, MathError> {
        let intr = Self { fx, fy, cx, cy, width, height };
        intr.validate()?;
        Ok(intr)
    }

    /// Freiburg 2 calibration of the TUM RGB-D benchmark at 640x480.
    pub fn tum_freiburg2() -> Self {
        Self { fx: 520.9, fy: 521.0, cx: 325.1, cy: 249.7, width: 640, height: 480 }
    }

    pub fn validate(&self) -> Result<(), MathError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(MathError::InvalidIntrinsics(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64)
            || !(self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(MathError::InvalidIntrinsics(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Intrinsics of pyramid level `level`: focal lengths and principal point
    /// scale by exactly `1 / 2^level`, dimensions are floor-divided.
    pub fn scaled(&self, level: usize) -> Self {
        let s = 1.0 / (1u64 << level) as f64;
        Self {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width >> level,
            height: self.height >> level,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn project(&self, p: &Vec3) -> Result<Vec2, MathError> {
        if !(p.z > 0.0) {
            return Err(MathError::BehindCamera(p.z));
        }
        Ok(Vec2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    pub fn backproject(&self, pixel: &Vec2, depth: f64) -> Result<Vec3, MathError> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(MathError::InvalidDepth(depth));
        }
        if !self.contains(pixel) {
            return Err(MathError::PixelOutOfBounds { u: pixel.x, v: pixel.y });
        }
        Ok(self.backproject_unchecked(pixel.x, pixel.y, depth))
    }

    /// Back-projection without validation, for hot loops over known-valid pixels.
    #[inline]
    pub fn backproject_unchecked(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    /// Viewing-ray direction through pixel `(u, v)` with unit z component.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, pixel: &Vec2) -> bool {
        pixel.x >= 0.0
            && pixel.y >= 0.0
            && pixel.x <= (self.width - 1) as f64
            && pixel.y <= (self.height - 1) as f64
    }

    /// Nearest integer pixel of a projection, if it lands inside the image.
    #[inline]
    pub fn nearest_pixel(&self, p: &Vec3) -> Option<(usize, usize)> {
        if !(p.z > 0.0) {
            return None;
        }
        let u = (self.fx * p.x / p.z + self.cx).round();
        let v = (self.fy * p.y / p.z + self.cy).round();
        if u < 0.0 || v < 0.0 || u >= self.width as f64 || v >= self.height as f64 {
            return None;
        }
        Some((u as usize, v as usize))
    }
}
