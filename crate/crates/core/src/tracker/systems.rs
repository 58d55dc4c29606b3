use nalgebra::{Cholesky, Matrix2x3};
use rayon::prelude::*;

use super::{Correspondence, TrackError, TrackerConfig};
use crate::image::PyramidLevel;
use crate::math::{Mat6, RigidTransform, Twist, Vec3, Vec6};
use crate::surface::RenderedView;

const CHUNK: usize = 4096;

/// Gauss-Newton normal equations `A h = -b` for a left-composed twist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalEquations6 {
    pub a: Mat6,
    pub b: Vec6,
}

impl Default for NormalEquations6 {
    fn default() -> Self {
        Self { a: Mat6::zeros(), b: Vec6::zeros() }
    }
}

impl NormalEquations6 {
    /// Adds the weighted row `w J^T J`, `w J^T r`.
    #[inline]
    fn accumulate(&mut self, jac: &Vec6, residual: f64, weight: f64) {
        self.a.syger(weight, jac, jac, 1.0);
        self.b.axpy(weight * residual, jac, 1.0);
    }

    pub fn add(&self, other: &NormalEquations6) -> NormalEquations6 {
        NormalEquations6 { a: self.a + other.a, b: self.b + other.b }
    }

    pub fn scaled(&self, s: f64) -> NormalEquations6 {
        NormalEquations6 { a: self.a * s, b: self.b * s }
    }

    /// Copies the lower triangle (filled by `syger`) into the upper one.
    fn symmetrize(mut self) -> Self {
        self.a.fill_upper_triangle_with_lower_triangle();
        self
    }
}

fn sum_ordered(parts: Vec<NormalEquations6>) -> NormalEquations6 {
    parts.iter().fold(NormalEquations6::default(), |acc, p| acc.add(p))
}

/// Point-to-plane system. With `q = guess * source`, `c = q x n` and
/// `d = q - p`, accumulates `A = Σ w [c; n][c; n]^T` and `b = Σ w [c; n] (d·n)`.
pub fn build_geometric_system(corrs: &[Correspondence], guess: &RigidTransform) -> NormalEquations6 {
    let parts: Vec<NormalEquations6> = corrs
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut sys = NormalEquations6::default();
            for c in chunk {
                let q = guess.transform_point(&c.source_point);
                let n = c.target_normal;
                let cr = q.cross(&n);
                let jac = Vec6::new(cr.x, cr.y, cr.z, n.x, n.y, n.z);
                sys.accumulate(&jac, (q - c.target_point).dot(&n), c.robust_weight);
            }
            sys.symmetrize()
        })
        .collect();
    sum_ordered(parts)
}

/// Residual and Jacobian row of one photometric sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotometricSample {
    pub residual: f64,
    pub jacobian: Vec6,
}

/// Intensity difference between the predicted view, sampled bilinearly where
/// live pixel `(u, v)` lands under `guess`, and the live intensity at `(u, v)`,
/// with its derivative with respect to a left-composed twist on `guess`.
///
/// Returns `None` when the live depth is missing, the warped point leaves the
/// predicted image, or the predicted depth around it disagrees with the
/// warped depth (occlusion or silhouette).
pub fn photometric_residual(
    live: &PyramidLevel,
    predicted: &RenderedView,
    guess: &RigidTransform,
    u: usize,
    v: usize,
    depth_gate: f64,
) -> Option<PhotometricSample> {
    let d = *live.depth.get(u, v);
    if !(d > 0.0) {
        return None;
    }
    let intr = &predicted.intr;
    let q = guess.transform_point(&live.intr.backproject_unchecked(u as f64, v as f64, d));
    let rt = predicted.pose.rotation.transpose();
    let x = rt * (q - predicted.pose.translation);
    if !(x.z > 0.0) {
        return None;
    }
    let px = intr.fx * x.x / x.z + intr.cx;
    let py = intr.fy * x.y / x.z + intr.cy;
    let (value, grad) = predicted.intensity.bilinear_with_gradient(px, py)?;
    let (u0, v0) = ((px.floor() as usize).min(intr.width - 2), (py.floor() as usize).min(intr.height - 2));
    for (du, dv) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
        let dp = *predicted.depth.get(u0 + du, v0 + dv);
        if !(dp > 0.0) || (dp - x.z).abs() > depth_gate {
            return None;
        }
    }
    let iz = 1.0 / x.z;
    let dproj = Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * x.x * iz * iz,
        0.0,
        intr.fy * iz,
        -intr.fy * x.y * iz * iz,
    );
    // Derivative of the sample with respect to the world point q.
    let g: Vec3 = (grad.transpose() * dproj * rt).transpose();
    let rot = q.cross(&g);
    Some(PhotometricSample {
        residual: value - live.intensity.get(u, v),
        jacobian: Vec6::new(rot.x, rot.y, rot.z, g.x, g.y, g.z),
    })
}

/// Photometric normal equations `J^T J`, `J^T r` over all usable live pixels,
/// plus the number of samples and their squared residual sum.
pub fn build_photometric_system(
    live: &PyramidLevel,
    predicted: &RenderedView,
    guess: &RigidTransform,
    cfg: &TrackerConfig,
) -> (NormalEquations6, usize, f64) {
    let (w, h) = live.depth.dims();
    let parts: Vec<(NormalEquations6, usize, f64)> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut sys = NormalEquations6::default();
            let (mut n, mut sq) = (0, 0.0);
            for u in 0..w {
                if let Some(s) = photometric_residual(live, predicted, guess, u, v, cfg.photo_depth_gate) {
                    sys.accumulate(&s.jacobian, s.residual, 1.0);
                    n += 1;
                    sq += s.residual * s.residual;
                }
            }
            (sys.symmetrize(), n, sq)
        })
        .collect();
    parts.into_iter().fold((NormalEquations6::default(), 0, 0.0), |(s, n, q), (ps, pn, pq)| {
        (s.add(&ps), n + pn, q + pq)
    })
}

/// Solves `(A + damping I) h = -b` by Cholesky factorization.
pub fn solve_step(sys: &NormalEquations6, damping: f64) -> Result<Twist, TrackError> {
    let m = sys.a + Mat6::identity() * damping;
    let scale = m.diagonal().max();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(TrackError::Degenerate);
    }
    let chol = Cholesky::new(m).ok_or(TrackError::Degenerate)?;
    let min_pivot = chol.l_dirty().diagonal().iter().map(|p| p * p).fold(f64::INFINITY, f64::min);
    if min_pivot < 1e-12 * scale {
        return Err(TrackError::Degenerate);
    }
    Ok(Twist(-chol.solve(&sys.b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    fn random_corrs(n: usize, seed: u64) -> Vec<Correspondence> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
                let n = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    .normalize();
                Correspondence {
                    source_point: p,
                    target_point: p + Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), 0.01),
                    target_normal: n,
                    robust_weight: rng.random_range(0.1..1.0),
                }
            })
            .collect()
    }

    #[test]
    fn aligned_pairs_give_zero_b() {
        let mut corrs = random_corrs(50, 1);
        for c in &mut corrs {
            c.target_point = c.source_point;
        }
        let sys = build_geometric_system(&corrs, &RigidTransform::identity());
        assert_eq!(sys.b, Vec6::zeros());
    }

    #[test]
    fn single_pair_hand_values() {
        let c = Correspondence {
            source_point: Vec3::new(0.0, 0.0, 1.0),
            target_point: Vec3::new(0.0, 0.0, 1.01),
            target_normal: Vec3::z(),
            robust_weight: 0.7,
        };
        let sys = build_geometric_system(&[c], &RigidTransform::identity());
        let mut expect_a = Mat6::zeros();
        expect_a[(5, 5)] = 0.7;
        assert!((sys.a - expect_a).abs().max() < 1e-15);
        assert!((sys.b - Vec6::new(0.0, 0.0, 0.0, 0.0, 0.0, -0.01 * 0.7)).abs().max() < 1e-15);
    }

    #[test]
    fn matches_dense_jacobian_oracle() {
        let corrs = random_corrs(1000, 2);
        let guess = RigidTransform::from_axis_angle(&Vec3::new(0.1, 0.9, 0.3), 0.2, Vec3::new(0.1, 0.0, -0.2));
        let sys = build_geometric_system(&corrs, &guess);
        let mut j = DMatrix::zeros(corrs.len(), 6);
        let mut r = nalgebra::DVector::zeros(corrs.len());
        let mut w = nalgebra::DVector::zeros(corrs.len());
        for (i, c) in corrs.iter().enumerate() {
            let q = guess.transform_point(&c.source_point);
            let cr = q.cross(&c.target_normal);
            for k in 0..3 {
                j[(i, k)] = cr[k];
                j[(i, k + 3)] = c.target_normal[k];
            }
            r[i] = (q - c.target_point).dot(&c.target_normal);
            w[i] = c.robust_weight;
        }
        let jw = DMatrix::from_diagonal(&w);
        let a = j.transpose() * &jw * &j;
        let b = j.transpose() * &jw * &r;
        for row in 0..6 {
            for col in 0..6 {
                assert!((a[(row, col)] - sys.a[(row, col)]).abs() < 1e-9);
            }
            assert!((b[row] - sys.b[row]).abs() < 1e-9);
        }
        assert!((sys.a - sys.a.transpose()).abs().max() <= 1e-12);
        assert!(sys.a.symmetric_eigenvalues().min() > -1e-9);
    }

    #[test]
    fn solve_identity_and_singular() {
        let sys = NormalEquations6 { a: Mat6::identity(), b: Vec6::x() };
        assert_eq!(solve_step(&sys, 0.0).unwrap().0, -Vec6::x());
        let mut a = Mat6::zeros();
        for k in 0..5 {
            let mut e = Vec6::zeros();
            e[k] = 1.0;
            e[5] = 1.0;
            a += e * e.transpose();
        }
        // Rank 5 after adding another vector in the same span.
        let f = Vec6::new(1.0, 1.0, 0.0, 0.0, 0.0, 2.0);
        a += f * f.transpose();
        let sing = NormalEquations6 { a, b: Vec6::zeros() };
        assert_eq!(solve_step(&sing, 0.0), Err(TrackError::Degenerate));
        assert!(solve_step(&sing, 1e-3).is_ok());
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let m = Mat6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let a = m * m.transpose() + Mat6::identity() * 0.1;
            let b = Vec6::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let h = solve_step(&NormalEquations6 { a, b }, 0.0).unwrap();
            let oracle = -(a.try_inverse().unwrap() * b);
            assert!((h.0 - oracle).norm() < 1e-10 * oracle.norm().max(1.0));
        }
    }

    #[test]
    fn weight_scaling_leaves_step_unchanged() {
        let corrs = random_corrs(300, 4);
        let scaled: Vec<_> =
            corrs.iter().map(|c| Correspondence { robust_weight: c.robust_weight * 7.5, ..*c }).collect();
        let g = RigidTransform::identity();
        let h1 = solve_step(&build_geometric_system(&corrs, &g), 0.0).unwrap();
        let h2 = solve_step(&build_geometric_system(&scaled, &g), 0.0).unwrap();
        assert!((h1.0 - h2.0).norm() < 1e-10);
    }

    #[test]
    fn small_translation_recovered_to_second_order() {
        let base = random_corrs(400, 5);
        for &s in &[1e-2, 1e-3] {
            let t = Vec3::new(0.6, -0.3, 0.74) * s;
            let corrs: Vec<_> = base
                .iter()
                .map(|c| Correspondence { target_point: c.source_point + t, robust_weight: 1.0, ..*c })
                .collect();
            let h = solve_step(&build_geometric_system(&corrs, &RigidTransform::identity()), 0.0).unwrap();
            let err = (h.translation() - t).norm() + h.rotation().norm();
            assert!(err <= 10.0 * t.norm_squared() + 1e-12, "err {err}");
        }
    }
}
