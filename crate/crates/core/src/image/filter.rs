use rayon::prelude::*;

use super::{DepthImage, Image};

/// One-dimensional factor of the 5x5 binomial kernel.
pub const BINOMIAL_5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Neighbors differing from the center by more than this are treated as a
/// different surface when smoothing depth for the pyramid.
const DEPTH_EDGE_JUMP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    pub radius: usize,
}

impl Default for BilateralParams {
    fn default() -> Self {
        Self { sigma_spatial: 2.0, sigma_range: 0.05, radius: 3 }
    }
}

/// Edge-preserving depth smoothing. Missing pixels stay missing and do not
/// contribute to their neighbors; weights are renormalized over the valid
/// part of each window.
pub fn bilateral_filter(depth: &DepthImage, params: &BilateralParams) -> DepthImage {
    assert!(params.sigma_spatial > 0.0 && params.sigma_range > 0.0, "sigmas must be positive");
    let (w, h) = depth.dims();
    let r = params.radius as isize;
    let inv_s = 1.0 / (2.0 * params.sigma_spatial * params.sigma_spatial);
    let inv_r = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
    let spatial: Vec<f64> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (-((dx * dx + dy * dy) as f64) * inv_s).exp()))
        .collect();
    let side = (2 * r + 1) as usize;

    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            let center = *depth.get(u, v);
            if center <= 0.0 {
                continue;
            }
            let (mut sum, mut norm) = (0.0, 0.0);
            for dy in -r..=r {
                let y = v as isize + dy;
                if y < 0 || y >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let x = u as isize + dx;
                    if x < 0 || x >= w as isize {
                        continue;
                    }
                    let d = *depth.get(x as usize, y as usize);
                    if d <= 0.0 {
                        continue;
                    }
                    let diff = d - center;
                    let k = spatial[(dy + r) as usize * side + (dx + r) as usize] * (-diff * diff * inv_r).exp();
                    sum += k * d;
                    norm += k;
                }
            }
            *px = sum / norm;
        }
    });
    Image::from_vec(w, h, out)
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable 5x5 binomial blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &Image<f64>) -> Image<f64> {
    let (w, h) = img.dims();
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            *px = BINOMIAL_5
                .iter()
                .enumerate()
                .map(|(k, c)| c * img.get(clamp_index(u as isize + k as isize - 2, w), v))
                .sum();
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            *px = BINOMIAL_5
                .iter()
                .enumerate()
                .map(|(k, c)| c * tmp[clamp_index(v as isize + k as isize - 2, h) * w + u])
                .sum();
        }
    });
    Image::from_vec(w, h, out)
}

/// Binomial blur for depth: missing neighbors and neighbors across a depth
/// discontinuity are excluded and the kernel is renormalized. Missing pixels
/// stay missing.
pub fn gaussian_blur_depth(depth: &DepthImage) -> DepthImage {
    let (w, h) = depth.dims();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(v, row)| {
        for (u, px) in row.iter_mut().enumerate() {
            let center = *depth.get(u, v);
            if center <= 0.0 {
                continue;
            }
            let (mut sum, mut norm) = (0.0, 0.0);
            for (ky, cy) in BINOMIAL_5.iter().enumerate() {
                let y = clamp_index(v as isize + ky as isize - 2, h);
                for (kx, cx) in BINOMIAL_5.iter().enumerate() {
                    let x = clamp_index(u as isize + kx as isize - 2, w);
                    let d = *depth.get(x, y);
                    if d <= 0.0 || (d - center).abs() > DEPTH_EDGE_JUMP {
                        continue;
                    }
                    sum += cx * cy * d;
                    norm += cx * cy;
                }
            }
            *px = sum / norm;
        }
    });
    Image::from_vec(w, h, out)
}
