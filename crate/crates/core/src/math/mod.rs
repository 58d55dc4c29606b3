//! Camera geometry, rigid motions, dual quaternions and lattice interpolation.
//!
//! Everything here is a pure function of its inputs and works in `f64`.

mod camera;
mod dual_quat;
mod interp;
mod transform;

pub use camera::PinholeIntrinsics;
pub use dual_quat::{dqlb, DualQuaternion};
pub use interp::{interpolate, trilinear, Cell};
pub use transform::{skew, RigidTransform, Twist, TwistMode};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
pub type Mat6 = nalgebra::Matrix6<f64>;
pub type Vec6 = nalgebra::Vector6<f64>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MathError {
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid depth measurement {0}")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) outside the image")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("degenerate blend: weights sum to zero or blended rotation vanished")]
    DegenerateBlend,
    #[error("blend inputs differ in length ({weights} weights, {dqs} dual quaternions)")]
    LengthMismatch { weights: usize, dqs: usize },
    #[error("query outside the interpolation cell")]
    OutOfCell,
}
