use nalgebra::{Matrix4, Rotation3, UnitQuaternion};
use std::ops::Mul;

use super::{Mat3, Vec3, Vec6};

/// Cross-product matrix: `skew(a) * b == a.cross(&b)`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Proper rigid motion `x -> R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation: t }
    }

    /// Rotation by `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rot = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self { rotation: *rot.matrix(), translation }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self { rotation: *q.to_rotation_matrix().matrix(), translation }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Nearest proper rotation to `rotation` in Frobenius norm (polar factor).
    pub fn orthonormalized(&self) -> RigidTransform {
        RigidTransform { rotation: nearest_rotation(&self.rotation), translation: self.translation }
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        c.acos()
    }

    /// Largest deviation of `R Rᵀ` from identity plus that of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let rrt = self.rotation * self.rotation.transpose() - Mat3::identity();
        rrt.abs().max() + (self.rotation.determinant() - 1.0).abs()
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;
    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut d = Mat3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * v_t;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TwistMode {
    /// Matrix exponential of the twist.
    #[default]
    Exact,
    /// First-order rotation `I + [ω]×` re-orthonormalized, translation used as is.
    SmallAngle,
}

/// Six-vector motion increment: rotation `(α, β, γ)` in radians followed by
/// translation `(x, y, z)` in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist(pub Vec6);

impl Twist {
    pub fn zero() -> Self {
        Twist(Vec6::zeros())
    }

    pub fn new(rotation: Vec3, translation: Vec3) -> Self {
        Twist(Vec6::new(rotation.x, rotation.y, rotation.z, translation.x, translation.y, translation.z))
    }

    pub fn rotation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn translation(&self) -> Vec3 {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_transform(&self, mode: TwistMode) -> RigidTransform {
        let w = self.rotation();
        let v = self.translation();
        match mode {
            TwistMode::SmallAngle => {
                let r = Mat3::identity() + skew(&w);
                RigidTransform { rotation: nearest_rotation(&r), translation: v }
            }
            TwistMode::Exact => {
                let theta2 = w.norm_squared();
                let theta = theta2.sqrt();
                let k = skew(&w);
                let k2 = k * k;
                // Series coefficients of Rodrigues' formula and the left Jacobian.
                let (a, b, c) = if theta < 1e-6 {
                    (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
                } else {
                    let (s, co) = theta.sin_cos();
                    (s / theta, (1.0 - co) / theta2, (theta - s) / (theta2 * theta))
                };
                let rotation = Mat3::identity() + a * k + b * k2;
                let jac = Mat3::identity() + b * k + c * k2;
                RigidTransform { rotation, translation: jac * v }
            }
        }
    }

    /// Inverse of the exact exponential for rotation angles below π.
    pub fn from_transform(t: &RigidTransform) -> Twist {
        let theta = t.rotation_angle();
        let r = t.rotation;
        let axis_part = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        let w = if theta < 1e-6 {
            axis_part * 0.5
        } else {
            axis_part * (theta / (2.0 * theta.sin()))
        };
        let k = skew(&w);
        let theta2 = theta * theta;
        let jac_inv = if theta < 1e-6 {
            Mat3::identity() - 0.5 * k + k * k / 12.0
        } else {
            let coeff = (1.0 - theta * theta.sin() / (2.0 * (1.0 - theta.cos()))) / theta2;
            Mat3::identity() - 0.5 * k + coeff * k * k
        };
        Twist::new(w, jac_inv * t.translation)
    }
}

impl From<[f64; 6]> for Twist {
    fn from(v: [f64; 6]) -> Self {
        Twist(Vec6::from_column_slice(&v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn rodrigues(axis: Vec3, angle: f64) -> Mat3 {
        let k = skew(&axis.normalize());
        Mat3::identity() + angle.sin() * k + (1.0 - angle.cos()) * k * k
    }

    #[test]
    fn zero_twist_is_identity() {
        for mode in [TwistMode::Exact, TwistMode::SmallAngle] {
            assert_eq!(Twist::zero().to_transform(mode), RigidTransform::identity());
        }
    }

    #[test]
    fn pure_translation_twist() {
        let t = Twist::from([0.0, 0.0, 0.0, 1.0, 2.0, 3.0]).to_transform(TwistMode::Exact);
        assert_eq!(t.rotation, Mat3::identity());
        assert_eq!(t.translation, Vec3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn quarter_turn_about_z_matches_rodrigues() {
        let t = Twist::from([0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0]).to_transform(TwistMode::Exact);
        let oracle = rodrigues(Vec3::z(), FRAC_PI_2);
        assert!((t.rotation - oracle).abs().max() < 1e-9);
        assert!((t.transform_point(&Vec3::x()) - Vec3::y()).norm() < 1e-12);
    }

    #[test]
    fn small_angle_agrees_to_second_order() {
        let dir = Vec6::new(0.3, -0.5, 0.2, 0.7, 0.1, -0.4).normalize();
        let mut worst = 0.0_f64;
        for &s in &[0.1, 0.05, 0.02, 0.01, 0.001] {
            let xi = Twist(dir * s);
            let a = xi.to_transform(TwistMode::Exact).to_matrix();
            let b = xi.to_transform(TwistMode::SmallAngle).to_matrix();
            worst = worst.max((a - b).norm() / (s * s));
        }
        assert!(worst < 1.0, "ratio {worst}");
    }

    #[test]
    fn log_inverts_exp() {
        let xi = Twist::from([0.4, -0.2, 1.1, 0.3, -2.0, 0.5]);
        let back = Twist::from_transform(&xi.to_transform(TwistMode::Exact));
        assert!((back.0 - xi.0).norm() < 1e-9);
    }

    fn arb_transform() -> impl Strategy<Value = RigidTransform> {
        (prop::array::uniform3(-1.0..1.0f64), -3.1..3.1f64, prop::array::uniform3(-5.0..5.0f64))
            .prop_filter("axis nonzero", |(a, _, _)| Vec3::from(*a).norm() > 1e-3)
            .prop_map(|(a, ang, t)| RigidTransform::from_axis_angle(&Vec3::from(a), ang, Vec3::from(t)))
    }

    proptest! {
        #[test]
        fn compose_with_inverse_is_identity(t in arb_transform()) {
            let id = t.compose(&t.inverse());
            prop_assert!((id.rotation - Mat3::identity()).abs().max() < 1e-9);
            prop_assert!(id.translation.norm() < 1e-9);
        }

        #[test]
        fn exp_is_orthonormal(v in prop::array::uniform6(-3.0..3.0f64)) {
            for mode in [TwistMode::Exact, TwistMode::SmallAngle] {
                let t = Twist::from(v).to_transform(mode);
                prop_assert!(t.orthonormality_error() < 1e-9);
            }
        }
    }
}
