//! Graph versions of the ortho6D construction, forward kinematics and the
//! matrix-to-quaternion map, so losses on global joint quantities
//! back-propagate into local rotations and root positions.

use crate::autograd::{Graph, Real, Tensor, Var};
use crate::geometry::{Skeleton, DEGENERACY_EPS};
use crate::{Error, Result};

/// `[..., 6] -> [..., 3, 3]` via Gram-Schmidt, columns `[x y z]`.
pub fn rot6_to_matrix<T: Real>(g: &mut Graph<T>, r6: Var) -> Result<Var> {
    let s = g.shape(r6).to_vec();
    let last = s.len().checked_sub(1).filter(|&l| s[l] == 6);
    let Some(ax) = last else {
        return Err(Error::shape("rot6_to_matrix", &s, &[6]));
    };
    let a = g.slice(r6, ax, 0, 3)?;
    let b = g.slice(r6, ax, 3, 3)?;
    let x = g.normalize_lastaxis(a, DEGENERACY_EPS)?;
    let zr = g.cross_lastaxis(x, b)?;
    let z = g.normalize_lastaxis(zr, DEGENERACY_EPS)?;
    let y = g.cross_lastaxis(z, x)?;
    // rows of the stacked block are the columns of R
    let stacked = g.concat(&[x, y, z], ax)?;
    let mut shape = s[..ax].to_vec();
    shape.extend_from_slice(&[3, 3]);
    let cols = g.reshape(stacked, &shape)?;
    g.transpose(cols)
}

/// Batched forward kinematics.
///
/// `root`: `[n, 3]` root positions; `rot6`: `[n, J, 6]` local rotations
/// (root global). Returns `([n, J, 3] positions, [n, J, 3, 3] rotations)`.
pub fn fk<T: Real>(g: &mut Graph<T>, skel: &Skeleton, root: Var, rot6: Var) -> Result<(Var, Var)> {
    let j = skel.joint_count();
    let rs = g.shape(rot6).to_vec();
    if rs.len() != 3 || rs[1] != j || rs[2] != 6 {
        return Err(Error::shape("fk", &rs, &[j, 6]));
    }
    let n = rs[0];
    if g.shape(root) != [n, 3] {
        return Err(Error::shape("fk", g.shape(root), &[n, 3]));
    }
    let mats = rot6_to_matrix(g, rot6)?;
    let mut pos: Vec<Var> = Vec::with_capacity(j);
    let mut rot: Vec<Var> = Vec::with_capacity(j);
    for i in 0..j {
        let local = g.slice(mats, 1, i, 1)?;
        let local = g.reshape(local, &[n, 3, 3])?;
        match skel.parent(i) {
            None => {
                pos.push(root);
                rot.push(local);
            }
            Some(p) => {
                let o = skel.offset(i);
                let off = g.constant(Tensor::from_f64(&[3, 1], &o)?);
                let moved = g.matmul(rot[p], off)?;
                let moved = g.reshape(moved, &[n, 3])?;
                pos.push(g.add(pos[p], moved)?);
                rot.push(g.matmul(rot[p], local)?);
            }
        }
    }
    let mut pos_parts = Vec::with_capacity(j);
    let mut rot_parts = Vec::with_capacity(j);
    for i in 0..j {
        pos_parts.push(g.reshape(pos[i], &[n, 1, 3])?);
        rot_parts.push(g.reshape(rot[i], &[n, 1, 3, 3])?);
    }
    Ok((g.concat(&pos_parts, 1)?, g.concat(&rot_parts, 1)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, Quaternion, Rot6};

    #[test]
    fn matches_plain_fk() {
        let skel = Skeleton::biped5();
        let rots: Vec<Rot6> = (0..5)
            .map(|i| {
                let q = Quaternion::from_axis_angle([1.0, i as f64, 0.5], 0.3 + i as f64 * 0.4);
                geometry::matrix_to_rot6(&q.to_matrix())
            })
            .collect();
        let root = [0.3, 0.9, -1.2];
        let want = geometry::fk(&skel, root, &rots).unwrap();

        let mut g = Graph::<f64>::new();
        let r = g.constant(Tensor::from_f64(&[1, 3], &root).unwrap());
        let flat: Vec<f64> = rots.iter().flat_map(|r| r.0).collect();
        let r6 = g.constant(Tensor::from_f64(&[1, 5, 6], &flat).unwrap());
        let (p, m) = fk(&mut g, &skel, r, r6).unwrap();
        for j in 0..5 {
            for c in 0..3 {
                assert!((g.value(p).data()[j * 3 + c] - want.positions[j][c]).abs() < 1e-12);
            }
            let got = geometry::RotationMatrix::from_flat(&g.value(m).data()[j * 9..(j + 1) * 9]);
            assert!(got.max_abs_diff(&want.rotations[j]) < 1e-12);
        }
    }
}
