use super::MathError;

/// Axis-aligned lattice cell in `D` dimensions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell<const D: usize> {
    pub lo: [f64; D],
    pub hi: [f64; D],
}

impl<const D: usize> Cell<D> {
    pub fn new(lo: [f64; D], hi: [f64; D]) -> Self {
        Self { lo, hi }
    }

    pub fn unit() -> Self {
        Self { lo: [0.0; D], hi: [1.0; D] }
    }
}

/// Multilinear interpolation inside one lattice cell.
///
/// `values` holds the `2^D` corner samples; bit `d` of a corner's index
/// selects `hi` along axis `d`. In 3-D that is `x + 2y + 4z`.
pub fn interpolate<const D: usize>(
    cell: &Cell<D>,
    values: &[f64],
    query: [f64; D],
) -> Result<f64, MathError> {
    assert_eq!(values.len(), 1 << D, "expected 2^D corner values");
    let mut frac = [0.0; D];
    for d in 0..D {
        let span = cell.hi[d] - cell.lo[d];
        if span == 0.0 || !span.is_finite() {
            return Err(MathError::OutOfCell);
        }
        let t = (query[d] - cell.lo[d]) / span;
        let slack = 1e-12;
        if !(t >= -slack && t <= 1.0 + slack) {
            return Err(MathError::OutOfCell);
        }
        frac[d] = t.clamp(0.0, 1.0);
    }
    // Collapse one axis at a time: pairs (a, b) along axis d become
    // a (1 - t) + b t.
    let mut level: Vec<f64> = values.to_vec();
    for t in frac {
        level = level.chunks(2).map(|p| p[0] * (1.0 - t) + p[1] * t).collect();
    }
    Ok(level[0])
}

/// Trilinear interpolation on a unit cell with corner index `x + 2y + 4z`.
#[inline]
pub fn trilinear(c: &[f64; 8], fx: f64, fy: f64, fz: f64) -> f64 {
    let c00 = c[0] * (1.0 - fx) + c[1] * fx;
    let c10 = c[2] * (1.0 - fx) + c[3] * fx;
    let c01 = c[4] * (1.0 - fx) + c[5] * fx;
    let c11 = c[6] * (1.0 - fx) + c[7] * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    c0 * (1.0 - fz) + c1 * fz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn corners_reproduce_values() {
        let cell = Cell::new([0.0, 1.0], [2.0, 3.0]);
        let vals = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(interpolate(&cell, &vals, [0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(interpolate(&cell, &vals, [2.0, 1.0]).unwrap(), 2.0);
        assert_eq!(interpolate(&cell, &vals, [0.0, 3.0]).unwrap(), 3.0);
        assert_eq!(interpolate(&cell, &vals, [2.0, 3.0]).unwrap(), 4.0);
    }

    #[test]
    fn linear_midpoint() {
        let v = interpolate(&Cell::new([0.0], [1.0]), &[0.0, 2.0], [0.5]).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn out_of_cell_and_degenerate() {
        assert_eq!(interpolate(&Cell::<1>::unit(), &[0.0, 1.0], [1.5]), Err(MathError::OutOfCell));
        assert_eq!(interpolate(&Cell::new([1.0], [1.0]), &[0.0, 1.0], [1.0]), Err(MathError::OutOfCell));
    }

    #[test]
    fn trilinear_exact_on_affine_field() {
        let f = |x: f64, y: f64, z: f64| 2.0 * x - y + 3.0 * z;
        let lo = [0.3, -1.0, 2.0];
        let hi = [0.8, -0.4, 2.25];
        let mut vals = [0.0; 8];
        for (i, v) in vals.iter_mut().enumerate() {
            let pick = |d: usize| if i >> d & 1 == 1 { hi[d] } else { lo[d] };
            *v = f(pick(0), pick(1), pick(2));
        }
        let cell = Cell::new(lo, hi);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q: [f64; 3] = std::array::from_fn(|d| rng.random_range(lo[d]..hi[d]));
            let got = interpolate(&cell, &vals, q).unwrap();
            assert!((got - f(q[0], q[1], q[2])).abs() < 1e-12);
            let t: [f64; 3] = std::array::from_fn(|d| (q[d] - lo[d]) / (hi[d] - lo[d]));
            assert!((trilinear(&vals, t[0], t[1], t[2]) - got).abs() < 1e-12);
        }
    }

    #[test]
    fn trilinear_bounded_by_corners() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let vals: [f64; 8] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let v = trilinear(&vals, rng.random(), rng.random(), rng.random());
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-15 && v <= hi + 1e-15);
        }
    }
}
