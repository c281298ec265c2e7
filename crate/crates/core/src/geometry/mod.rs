//! Rotation representations, SLERP and forward kinematics.
//!
//! Plain `f64` routines live in [`quat`], [`rot`] and [`fk`]; [`diff`]
//! re-expresses the ortho6D construction and the FK recursion as graph
//! operations so gradients flow from joint positions back to the network.

pub mod diff;
pub mod fk;
pub mod quat;
pub mod rot;
pub mod skeleton;

pub use fk::{fk, FkPose};
pub use quat::{make_sign_continuous, slerp, Quaternion};
pub use rot::{matrix_to_rot6, rot6_to_matrix, Rot6, RotationMatrix, DEGENERACY_EPS};
pub use skeleton::Skeleton;

pub type Vec3 = [f64; 3];

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}
