use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion};

use super::{io_err, parse_err, DatasetError};
use crate::math::{Mat3, RigidTransform, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub timestamp: f64,
    /// Camera to world.
    pub pose: RigidTransform,
}

pub type Trajectory = Vec<TrajectorySample>;

/// Parses TUM trajectory text: `timestamp tx ty tz qx qy qz qw` per line,
/// `#` comments. Quaternions are normalized.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Trajectory, DatasetError> {
    let mut out: Trajectory = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| parse_err(path, i + 1, format!("bad number: {e}")))?;
        if vals.len() != 8 {
            return Err(parse_err(path, i + 1, format!("expected 8 fields, found {}", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, i + 1, "non-finite value"));
        }
        let q = Quaternion::new(vals[7], vals[4], vals[5], vals[6]);
        if q.norm() < 1e-9 {
            return Err(parse_err(path, i + 1, "zero quaternion"));
        }
        if let Some(prev) = out.last() {
            if vals[0] <= prev.timestamp {
                return Err(parse_err(path, i + 1, "timestamps must increase"));
            }
        }
        let pose = RigidTransform::from_quaternion(&UnitQuaternion::from_quaternion(q), Vec3::new(vals[1], vals[2], vals[3]));
        out.push(TrajectorySample { timestamp: vals[0], pose });
    }
    Ok(out)
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_trajectory(&text, path)
}

pub fn format_trajectory(traj: &[TrajectorySample]) -> String {
    let mut s = String::new();
    for sample in traj {
        let q = sample.pose.quaternion();
        let t = sample.pose.translation;
        writeln!(
            s,
            "{:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            sample.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
        .unwrap();
    }
    s
}

pub fn write_trajectory(path: &Path, traj: &[TrajectorySample]) -> Result<(), DatasetError> {
    std::fs::write(path, format_trajectory(traj)).map_err(io_err(path))
}

/// Greedy one-to-one matching of timestamps closest first, as the TUM
/// benchmark tools do. Returns `(estimated index, reference index)` pairs in
/// estimated-timestamp order.
pub fn associate_trajectories(est: &[TrajectorySample], reference: &[TrajectorySample], tol: f64) -> Vec<(usize, usize)> {
    associate_stamps(&est.iter().map(|s| s.timestamp).collect::<Vec<_>>(), &reference.iter().map(|s| s.timestamp).collect::<Vec<_>>(), tol)
}

pub(crate) fn associate_stamps(a: &[f64], b: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, ta) in a.iter().enumerate() {
        // Both lists are sorted; only a window of b can be within tolerance.
        let start = b.partition_point(|tb| *tb < ta - tol);
        for (j, tb) in b.iter().enumerate().skip(start) {
            if *tb > ta + tol {
                break;
            }
            candidates.push(((ta - tb).abs(), i, j));
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let (mut used_a, mut used_b) = (vec![false; a.len()], vec![false; b.len()]);
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Closed-form rigid alignment (no scale) taking `from` points onto `to`.
pub fn align_horn(from: &[Vec3], to: &[Vec3]) -> RigidTransform {
    assert_eq!(from.len(), to.len());
    let n = from.len() as f64;
    let mf: Vec3 = from.iter().sum::<Vec3>() / n;
    let mt: Vec3 = to.iter().sum::<Vec3>() / n;
    let mut cov = Mat3::zeros();
    for (f, t) in from.iter().zip(to) {
        cov += (t - mt) * (f - mf).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * v_t;
    RigidTransform::new(r, mt - r * mf)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteOptions {
    pub align: bool,
    pub tolerance: f64,
}

impl Default for AteOptions {
    fn default() -> Self {
        Self { align: true, tolerance: 0.02 }
    }
}

/// Root-mean-square translational difference of associated poses, after an
/// optional global rigid alignment of the estimate onto the reference.
pub fn evaluate_ate_rmse(est: &[TrajectorySample], reference: &[TrajectorySample], opts: &AteOptions) -> Result<f64, DatasetError> {
    let pairs = associate_trajectories(est, reference, opts.tolerance);
    if pairs.is_empty() {
        return Err(DatasetError::NoAssociation);
    }
    let e: Vec<Vec3> = pairs.iter().map(|(i, _)| est[*i].pose.translation).collect();
    let r: Vec<Vec3> = pairs.iter().map(|(_, j)| reference[*j].pose.translation).collect();
    let align = if opts.align { align_horn(&e, &r) } else { RigidTransform::identity() };
    let sq: f64 = e.iter().zip(&r).map(|(a, b)| (align.transform_point(a) - b).norm_squared()).sum();
    Ok((sq / e.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpeResult {
    /// Translation magnitude of each relative error, one per associated index `i`.
    pub errors: Vec<f64>,
    pub rmse: f64,
}

/// Relative pose error over `delta` associated samples:
/// `E_i = (P_i^-1 P_{i+Δ})^-1 (Q_i^-1 Q_{i+Δ})` with `P` estimated and `Q` reference.
pub fn evaluate_rpe(est: &[TrajectorySample], reference: &[TrajectorySample], delta: usize, tolerance: f64) -> Result<RpeResult, DatasetError> {
    assert!(delta >= 1, "RPE delta must be at least 1");
    let pairs = associate_trajectories(est, reference, tolerance);
    if pairs.len() < delta + 1 {
        return Err(DatasetError::TooFewSamples { needed: delta + 1, found: pairs.len() });
    }
    let errors: Vec<f64> = (0..pairs.len() - delta)
        .map(|k| {
            let (ea, ra) = pairs[k];
            let (eb, rb) = pairs[k + delta];
            let rel_est = est[ea].pose.inverse().compose(&est[eb].pose);
            let rel_ref = reference[ra].pose.inverse().compose(&reference[rb].pose);
            rel_est.inverse().compose(&rel_ref).translation.norm()
        })
        .collect();
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    Ok(RpeResult { errors, rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_traj(n: usize, seed: u64) -> Trajectory {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.1..1.0));
                let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                TrajectorySample { timestamp: i as f64 * 0.1, pose: RigidTransform::from_axis_angle(&axis, rng.random_range(-3.0..3.0), t) }
            })
            .collect()
    }

    #[test]
    fn identical_trajectories() {
        let t = random_traj(30, 1);
        assert!(evaluate_ate_rmse(&t, &t, &AteOptions::default()).unwrap() < 1e-9);
        let rpe = evaluate_rpe(&t, &t, 1, 0.02).unwrap();
        assert!(rpe.errors.iter().all(|e| *e < 1e-12));
    }

    #[test]
    fn constant_offset_without_alignment() {
        let t = random_traj(20, 2);
        let d = Vec3::new(0.3, -0.4, 1.2);
        let off: Trajectory = t.iter().map(|s| TrajectorySample { pose: RigidTransform::from_translation(d).compose(&s.pose), ..*s }).collect();
        let ate = evaluate_ate_rmse(&off, &t, &AteOptions { align: false, ..Default::default() }).unwrap();
        assert!((ate - d.norm()).abs() < 1e-12);
        assert!(evaluate_ate_rmse(&off, &t, &AteOptions::default()).unwrap() < 1e-9);
    }

    #[test]
    fn ate_matches_direct_formula() {
        let a = random_traj(100, 3);
        let b = random_traj(100, 4);
        let got = evaluate_ate_rmse(&a, &b, &AteOptions { align: false, ..Default::default() }).unwrap();
        let mut sum = 0.0;
        for (x, y) in a.iter().zip(&b) {
            let d = x.pose.translation - y.pose.translation;
            sum += d.x * d.x + d.y * d.y + d.z * d.z;
        }
        assert!((got - (sum / 100.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_invariance() {
        let reference = random_traj(40, 5);
        let mut noisy = reference.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for s in &mut noisy {
            s.pose.translation += Vec3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        }
        let g = RigidTransform::from_axis_angle(&Vec3::new(1.0, 2.0, 3.0), 1.0, Vec3::new(5.0, -1.0, 2.0));
        let moved: Trajectory = noisy.iter().map(|s| TrajectorySample { pose: g.compose(&s.pose), ..*s }).collect();
        let a = evaluate_ate_rmse(&noisy, &reference, &AteOptions::default()).unwrap();
        let b = evaluate_ate_rmse(&moved, &reference, &AteOptions::default()).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn rpe_matches_direct_formula_and_locality() {
        let a = random_traj(50, 7);
        let b = random_traj(50, 8);
        let rpe = evaluate_rpe(&a, &b, 1, 0.02).unwrap();
        assert_eq!(rpe.errors.len(), 49);
        for i in 0..49 {
            let pa = a[i].pose.to_matrix().try_inverse().unwrap() * a[i + 1].pose.to_matrix();
            let pb = b[i].pose.to_matrix().try_inverse().unwrap() * b[i + 1].pose.to_matrix();
            let e = pa.try_inverse().unwrap() * pb;
            let t = Vec3::new(e[(0, 3)], e[(1, 3)], e[(2, 3)]).norm();
            assert!((t - rpe.errors[i]).abs() < 1e-12);
        }

        let mut moved = a.clone();
        moved[10].pose.translation += Vec3::new(0.1, 0.0, 0.0);
        let rpe = evaluate_rpe(&moved, &a, 1, 0.02).unwrap();
        for (i, e) in rpe.errors.iter().enumerate() {
            assert_eq!(*e > 1e-9, i == 9 || i == 10, "pair {i}");
        }
        assert!(evaluate_rpe(&a[..1], &a[..1], 1, 0.02).is_err());
    }

    #[test]
    fn text_roundtrip_and_errors() {
        let t = random_traj(5, 9);
        let text = format_trajectory(&t);
        let back = parse_trajectory(&text, Path::new("x")).unwrap();
        for (a, b) in t.iter().zip(&back) {
            assert!((a.pose.translation - b.pose.translation).norm() < 1e-8);
            assert!((a.pose.rotation - b.pose.rotation).abs().max() < 1e-8);
        }
        let err = parse_trajectory("# c\n1 0 0 0 0 0 0 1\n2 0 0 x 0 0 0 1\n", Path::new("gt.txt")).unwrap_err();
        assert!(err.to_string().starts_with("gt.txt:3:"), "{err}");
    }

    #[test]
    fn association_tolerance() {
        assert_eq!(associate_stamps(&[1.0, 2.0], &[1.05, 2.01], 0.02), vec![(1, 1)]);
    }
}
