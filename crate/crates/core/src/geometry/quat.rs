use serde::{Deserialize, Serialize};

use super::rot::RotationMatrix;
use super::Vec3;

/// Quaternion `(w, x, y, z)`. Rotations use unit quaternions; `q` and `-q`
/// denote the same rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Above this |dot| the two endpoints are treated as coincident and SLERP
/// falls back to normalized linear interpolation.
const SLERP_LINEAR_DOT: f64 = 1.0 - 1e-7;

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Quaternion { w, x, y, z }
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Quaternion::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    /// Rotation by `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        let n = super::norm(axis);
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let (s, c) = (angle * 0.5).sin_cos();
        let k = s / n;
        Quaternion::new(c, axis[0] * k, axis[1] * k, axis[2] * k)
    }

    pub fn dot(self, o: Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalize(self) -> Self {
        let n = self.norm();
        Quaternion::new(self.w / n, self.x / n, self.y / n, self.z / n)
    }

    pub fn neg(self) -> Self {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }

    pub fn conjugate(self) -> Self {
        Quaternion::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * o`.
    pub fn mul(self, o: Quaternion) -> Self {
        Quaternion::new(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )
    }

    /// Sign representative with `w >= 0`.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// `self` or `-self`, whichever lies in the hemisphere of `reference`.
    pub fn aligned_to(self, reference: Quaternion) -> Self {
        if self.dot(reference) < 0.0 {
            self.neg()
        } else {
            self
        }
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(self) -> f64 {
        2.0 * self.w.abs().min(1.0).acos()
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        self.to_matrix().apply(v)
    }

    pub fn to_matrix(self) -> RotationMatrix {
        let Quaternion { w, x, y, z } = self;
        RotationMatrix([
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ])
    }

    /// Shepperd-style conversion choosing the branch with the largest of
    /// trace and diagonal entries; output canonicalized to `w >= 0`.
    pub fn from_matrix(r: &RotationMatrix) -> Self {
        let m = r.0;
        let tr = m[0][0] + m[1][1] + m[2][2];
        let q = if tr >= m[0][0] && tr >= m[1][1] && tr >= m[2][2] {
            let s = 2.0 * (1.0 + tr).sqrt();
            Quaternion::new(
                0.25 * s,
                (m[2][1] - m[1][2]) / s,
                (m[0][2] - m[2][0]) / s,
                (m[1][0] - m[0][1]) / s,
            )
        } else if m[0][0] >= m[1][1] && m[0][0] >= m[2][2] {
            let s = 2.0 * (1.0 + m[0][0] - m[1][1] - m[2][2]).sqrt();
            Quaternion::new(
                (m[2][1] - m[1][2]) / s,
                0.25 * s,
                (m[0][1] + m[1][0]) / s,
                (m[0][2] + m[2][0]) / s,
            )
        } else if m[1][1] >= m[2][2] {
            let s = 2.0 * (1.0 - m[0][0] + m[1][1] - m[2][2]).sqrt();
            Quaternion::new(
                (m[0][2] - m[2][0]) / s,
                (m[0][1] + m[1][0]) / s,
                0.25 * s,
                (m[1][2] + m[2][1]) / s,
            )
        } else {
            let s = 2.0 * (1.0 - m[0][0] - m[1][1] + m[2][2]).sqrt();
            Quaternion::new(
                (m[1][0] - m[0][1]) / s,
                (m[0][2] + m[2][0]) / s,
                (m[1][2] + m[2][1]) / s,
                0.25 * s,
            )
        };
        q.normalize().canonical()
    }
}

/// Spherical linear interpolation at constant angular velocity.
///
/// `q1` is first moved into the hemisphere of `q0`, so `q1` and `-q1`
/// produce the same rotation path.
pub fn slerp(q0: Quaternion, q1: Quaternion, t: f64) -> Quaternion {
    let q1 = q1.aligned_to(q0);
    let d = q0.dot(q1).min(1.0);
    if d > SLERP_LINEAR_DOT {
        return Quaternion::new(
            q0.w + (q1.w - q0.w) * t,
            q0.x + (q1.x - q0.x) * t,
            q0.y + (q1.y - q0.y) * t,
            q0.z + (q1.z - q0.z) * t,
        )
        .normalize();
    }
    let theta = d.acos();
    let s = theta.sin();
    let a = ((1.0 - t) * theta).sin() / s;
    let b = (t * theta).sin() / s;
    Quaternion::new(
        a * q0.w + b * q1.w,
        a * q0.x + b * q1.x,
        a * q0.y + b * q1.y,
        a * q0.z + b * q1.z,
    )
    .normalize()
}

/// Flips signs along a track so consecutive quaternions have a
/// non-negative dot product.
pub fn make_sign_continuous(track: &mut [Quaternion]) {
    for t in 1..track.len() {
        if track[t].dot(track[t - 1]) < 0.0 {
            track[t] = track[t].neg();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_continuity_flips_alternating_track() {
        let q = Quaternion::from_axis_angle([0.0, 1.0, 0.0], 0.7);
        let mut track: Vec<_> = (0..6).map(|i| if i % 2 == 0 { q } else { q.neg() }).collect();
        make_sign_continuous(&mut track);
        assert!(track.windows(2).all(|w| w[0].dot(w[1]) > 0.0));
        assert_eq!(track[0], q);
    }
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn close(a: Quaternion, b: Quaternion, tol: f64) -> bool {
        a.to_array().iter().zip(b.to_array()).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn identity_matrix_gives_identity_quaternion() {
        let q = Quaternion::from_matrix(&RotationMatrix::IDENTITY);
        assert!(close(q, Quaternion::IDENTITY, 1e-12));
    }

    #[test]
    fn half_turn_about_x() {
        // axis-angle: (cos 90°, sin 90° · x̂) = (0, 1, 0, 0)
        let r = RotationMatrix([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
        let q = Quaternion::from_matrix(&r);
        assert!(close(q, Quaternion::new(0.0, 1.0, 0.0, 0.0), 1e-12));
    }

    #[test]
    fn slerp_endpoints_and_midpoint() {
        let q0 = Quaternion::IDENTITY;
        let q1 = Quaternion::from_axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2);
        assert!(close(slerp(q0, q1, 0.0), q0, 1e-12));
        assert!(close(slerp(q0, q1, 1.0), q1, 1e-12));
        let mid = slerp(q0, q1, 0.5);
        // half of 90° about z: (cos 22.5°, 0, 0, sin 22.5°)
        assert!(close(mid, Quaternion::new(0.92388, 0.0, 0.0, 0.38268), 1e-5));
        assert!(close(
            mid,
            Quaternion::from_axis_angle([0.0, 0.0, 1.0], FRAC_PI_4),
            1e-12
        ));
    }

    #[test]
    fn slerp_ignores_sign_of_target() {
        let q0 = Quaternion::from_axis_angle([1.0, 2.0, 0.5], 0.4);
        let q1 = Quaternion::from_axis_angle([-0.3, 1.0, 0.2], 2.1);
        for t in [0.1, 0.37, 0.5, 0.9] {
            let a = slerp(q0, q1, t);
            let b = slerp(q0, q1.neg(), t);
            assert!(close(a, b, 1e-12));
        }
    }

    #[test]
    fn slerp_angle_is_linear_in_t() {
        let axis = [0.2, -0.5, 0.84];
        let total = 2.5;
        let q0 = Quaternion::from_axis_angle([1.0, 0.0, 0.0], 0.3);
        let q1 = q0.mul(Quaternion::from_axis_angle(axis, total));
        for t in [0.25, 0.5, 0.75] {
            let want = q0.mul(Quaternion::from_axis_angle(axis, total * t));
            let got = slerp(q0, q1, t);
            assert!(close(got.aligned_to(want), want, 1e-9), "t={t}");
            assert!((got.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearly_equal_endpoints_use_linear_fallback() {
        let q0 = Quaternion::from_axis_angle([0.0, 1.0, 0.0], 1.0);
        let q1 = Quaternion::from_axis_angle([0.0, 1.0, 0.0], 1.0 + 1e-9);
        let m = slerp(q0, q1, 0.5);
        assert!(m.w.is_finite());
        assert!((m.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_round_trip_every_branch() {
        let cases = [
            Quaternion::from_axis_angle([1.0, 0.0, 0.0], PI * 0.95),
            Quaternion::from_axis_angle([0.0, 1.0, 0.0], PI * 0.95),
            Quaternion::from_axis_angle([0.0, 0.0, 1.0], PI * 0.95),
            Quaternion::from_axis_angle([1.0, 1.0, 1.0], FRAC_PI_2),
        ];
        for q in cases {
            let back = Quaternion::from_matrix(&q.to_matrix());
            assert!(close(back, q.canonical(), 1e-12));
        }
    }
}
