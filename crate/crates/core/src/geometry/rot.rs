use serde::{Deserialize, Serialize};

use super::{cross, dot, norm, scale, Vec3};
use crate::{Error, Result};

/// Below this length (or cross-product length) an ortho6D vector is
/// considered degenerate.
pub const DEGENERACY_EPS: f64 = 1e-8;

/// Ortho6D rotation: the first two columns of a rotation matrix, stacked.
/// Any finite, non-degenerate value maps to a rotation via Gram-Schmidt.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rot6(pub [f64; 6]);

/// Row-major 3×3 matrix; columns are the rotated basis vectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(pub [[f64; 3]; 3]);

impl Rot6 {
    pub const IDENTITY: Rot6 = Rot6([1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

    pub fn first(&self) -> Vec3 {
        [self.0[0], self.0[1], self.0[2]]
    }

    pub fn second(&self) -> Vec3 {
        [self.0[3], self.0[4], self.0[5]]
    }

    pub fn is_degenerate(&self) -> bool {
        let x = self.first();
        let nx = norm(x);
        nx <= DEGENERACY_EPS || norm(cross(scale(x, 1.0 / nx), self.second())) <= DEGENERACY_EPS
    }
}

impl RotationMatrix {
    pub const IDENTITY: RotationMatrix = RotationMatrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Self {
        RotationMatrix([[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]])
    }

    pub fn column(&self, c: usize) -> Vec3 {
        [self.0[0][c], self.0[1][c], self.0[2][c]]
    }

    /// Rotation by `angle` radians about the vertical (+Y) axis.
    pub fn about_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        RotationMatrix([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    }

    pub fn mul(&self, o: &RotationMatrix) -> RotationMatrix {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        RotationMatrix(r)
    }

    pub fn transpose(&self) -> RotationMatrix {
        let m = self.0;
        RotationMatrix([
            [m[0][0], m[1][0], m[2][0]],
            [m[0][1], m[1][1], m[2][1]],
            [m[0][2], m[1][2], m[2][2]],
        ])
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn det(&self) -> f64 {
        dot(self.column(0), cross(self.column(1), self.column(2)))
    }

    /// Largest deviation of `RᵀR` from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        let p = self.transpose().mul(self);
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p.0[i][j] - want).abs());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, o: &RotationMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                worst = worst.max((self.0[i][j] - o.0[i][j]).abs());
            }
        }
        worst
    }

    pub fn flat(&self) -> [f64; 9] {
        let m = self.0;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn from_flat(f: &[f64]) -> Self {
        RotationMatrix([[f[0], f[1], f[2]], [f[3], f[4], f[5]], [f[6], f[7], f[8]]])
    }
}

/// Gram-Schmidt: `x = r[..3]/‖r[..3]‖`, `z = (x × r[3..])/‖·‖`, `y = z × x`,
/// assembled as columns `[x y z]`.
pub fn rot6_to_matrix(r: &Rot6) -> Result<RotationMatrix> {
    let a = r.first();
    let na = norm(a);
    if !(na > DEGENERACY_EPS) {
        return Err(Error::Degenerate(format!("first column too short: {:?}", r.0)));
    }
    let x = scale(a, 1.0 / na);
    let zr = cross(x, r.second());
    let nz = norm(zr);
    if !(nz > DEGENERACY_EPS) {
        return Err(Error::Degenerate(format!("columns parallel: {:?}", r.0)));
    }
    let z = scale(zr, 1.0 / nz);
    let y = cross(z, x);
    Ok(RotationMatrix::from_columns(x, y, z))
}

pub fn matrix_to_rot6(m: &RotationMatrix) -> Rot6 {
    let (x, y) = (m.column(0), m.column(1));
    Rot6([x[0], x[1], x[2], y[0], y[1], y[2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_identity(m: &RotationMatrix) {
        assert!(m.max_abs_diff(&RotationMatrix::IDENTITY) < 1e-15, "{m:?}");
    }

    #[test]
    fn canonical_frame() {
        assert_identity(&rot6_to_matrix(&Rot6([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap());
    }

    #[test]
    fn scaled_columns_are_normalized() {
        assert_identity(&rot6_to_matrix(&Rot6([2.0, 0.0, 0.0, 0.0, 3.0, 0.0])).unwrap());
    }

    #[test]
    fn second_column_is_orthogonalized() {
        // z = x̂ × (1,1,0) / ‖·‖ = ẑ; y = ẑ × x̂ = ŷ
        assert_identity(&rot6_to_matrix(&Rot6([1.0, 0.0, 0.0, 1.0, 1.0, 0.0])).unwrap());
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(rot6_to_matrix(&Rot6([0.0; 6])), Err(Error::Degenerate(_))));
        assert!(matches!(
            rot6_to_matrix(&Rot6([1.0, 0.0, 0.0, 2.0, 0.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
        assert!(rot6_to_matrix(&Rot6([f64::NAN, 0.0, 0.0, 0.0, 1.0, 0.0])).is_err());
    }

    #[test]
    fn rot6_round_trip() {
        let m = super::super::Quaternion::from_axis_angle([0.3, -1.0, 0.7], 2.2).to_matrix();
        let back = rot6_to_matrix(&matrix_to_rot6(&m)).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-12);
    }
}
