use nalgebra::{Quaternion, UnitQuaternion};
use std::ops::{Add, Mul};

use super::{MathError, RigidTransform, Vec3};

/// Dual quaternion `real + ε dual` encoding a rigid motion.
///
/// The translation is carried as `dual = ½ (0, t) ⊗ real`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualQuaternion {
    pub real: Quaternion<f64>,
    pub dual: Quaternion<f64>,
}

impl Default for DualQuaternion {
    fn default() -> Self {
        Self::identity()
    }
}

fn pure(v: &Vec3) -> Quaternion<f64> {
    Quaternion::new(0.0, v.x, v.y, v.z)
}

impl DualQuaternion {
    pub fn identity() -> Self {
        Self { real: Quaternion::identity(), dual: Quaternion::new(0.0, 0.0, 0.0, 0.0) }
    }

    pub fn new(real: Quaternion<f64>, dual: Quaternion<f64>) -> Self {
        Self { real, dual }
    }

    /// Components as `[rw, rx, ry, rz, dw, dx, dy, dz]`.
    pub fn to_array(&self) -> [f64; 8] {
        let (r, d) = (&self.real, &self.dual);
        [r.w, r.i, r.j, r.k, d.w, d.i, d.j, d.k]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            real: Quaternion::new(a[0], a[1], a[2], a[3]),
            dual: Quaternion::new(a[4], a[5], a[6], a[7]),
        }
    }

    pub fn from_transform(t: &RigidTransform) -> Self {
        let real = t.quaternion().into_inner();
        let dual = pure(&t.translation) * real * 0.5;
        Self { real, dual }
    }

    pub fn to_transform(&self) -> RigidTransform {
        let n = self.normalized();
        let rot = UnitQuaternion::new_unchecked(n.real);
        RigidTransform::from_quaternion(&rot, n.translation())
    }

    /// Translation `vec(2 dual real*)`; assumes a unit real part.
    pub fn translation(&self) -> Vec3 {
        let t = self.dual * self.real.conjugate() * 2.0;
        Vec3::new(t.i, t.j, t.k)
    }

    /// Divides by `|real|` and removes the component of `dual` along `real`,
    /// restoring the rigid-motion constraint `real · dual = 0`.
    pub fn normalized(&self) -> Self {
        let n = self.real.norm();
        let real = self.real / n;
        let dual = self.dual / n;
        let dual = dual - real * real.dot(&dual);
        Self { real, dual }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { real: self.real * s, dual: self.dual * s }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.to_transform().transform_point(p)
    }
}

impl Add for DualQuaternion {
    type Output = DualQuaternion;
    fn add(self, rhs: DualQuaternion) -> DualQuaternion {
        DualQuaternion { real: self.real + rhs.real, dual: self.dual + rhs.dual }
    }
}

/// Dual-quaternion product; `a * b` applies `b` first.
impl Mul for DualQuaternion {
    type Output = DualQuaternion;
    fn mul(self, rhs: DualQuaternion) -> DualQuaternion {
        DualQuaternion {
            real: self.real * rhs.real,
            dual: self.real * rhs.dual + self.dual * rhs.real,
        }
    }
}

/// Normalized weighted blend of dual quaternions.
///
/// Inputs whose real part points into the opposite hemisphere from the first
/// entry are negated before summing so that `q` and `-q` blend consistently.
pub fn dqlb(weights: &[f64], dqs: &[DualQuaternion]) -> Result<DualQuaternion, MathError> {
    if weights.len() != dqs.len() || dqs.is_empty() {
        return Err(MathError::LengthMismatch { weights: weights.len(), dqs: dqs.len() });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(MathError::DegenerateBlend);
    }
    let pivot = dqs[0].real;
    let mut acc = DualQuaternion {
        real: Quaternion::new(0.0, 0.0, 0.0, 0.0),
        dual: Quaternion::new(0.0, 0.0, 0.0, 0.0),
    };
    for (w, dq) in weights.iter().zip(dqs) {
        let s = if pivot.dot(&dq.real) < 0.0 { -w } else { *w };
        acc = acc + dq.scale(s);
    }
    if acc.real.norm() < 1e-12 * total {
        return Err(MathError::DegenerateBlend);
    }
    Ok(acc.normalized())
}
