use super::rot::{rot6_to_matrix, Rot6, RotationMatrix};
use super::{add, Skeleton, Vec3};
use crate::{Error, Result};

/// Global joint positions and rotations of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FkPose {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<RotationMatrix>,
}

/// Forward kinematics for one frame.
///
/// `local[0]` is the root's global rotation; every other entry is relative
/// to the parent. The root is placed at `root_pos` (its offset is ignored);
/// each child follows `G_j = G_parent · [R_j o_j; 0 1]`.
pub fn fk(skel: &Skeleton, root_pos: Vec3, local: &[Rot6]) -> Result<FkPose> {
    let mats = local.iter().map(rot6_to_matrix).collect::<Result<Vec<_>>>()?;
    fk_matrices(skel, root_pos, &mats)
}

pub fn fk_matrices(skel: &Skeleton, root_pos: Vec3, local: &[RotationMatrix]) -> Result<FkPose> {
    let j = skel.joint_count();
    if local.len() != j {
        return Err(Error::shape("fk", &[j], &[local.len()]));
    }
    let mut positions = Vec::with_capacity(j);
    let mut rotations: Vec<RotationMatrix> = Vec::with_capacity(j);
    for (i, r) in local.iter().enumerate() {
        match skel.parent(i) {
            None => {
                positions.push(root_pos);
                rotations.push(*r);
            }
            Some(p) => {
                let gp = rotations[p];
                positions.push(add(positions[p], gp.apply(skel.offset(i))));
                rotations.push(gp.mul(r));
            }
        }
    }
    Ok(FkPose { positions, rotations })
}
