//! XZ-centering, Y-rotation and per-channel position statistics.
//!
//! The facing direction of a frame is `up × (right_hip - left_hip)`
//! averaged over the first ten frames of the fitting set. Skeletons without
//! recognizable hips fall back to the root's local +Z axis. Windows are
//! rotated so the facing direction becomes +Z.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MotionSequence, Pose, PositionSequence};
use crate::geometry::{self, rot6_to_matrix, RotationMatrix, Skeleton, Vec3};
use crate::{Error, Result};

pub const FACING_FRAMES: usize = 10;
const UP: Vec3 = [0.0, 1.0, 0.0];
/// Channels with smaller spread are standardized with unit scale.
const MIN_STD: f64 = 1e-6;

pub(crate) fn hips(skel: &Skeleton) -> Option<(usize, usize)> {
    let find = |side: &str| {
        [["upleg"], ["hip"], ["thigh"]]
            .iter()
            .find_map(|k| skel.find_joint(&[side, k[0]]))
    };
    Some((find("left")?, find("right")?))
}

/// Rigid planar transform `p -> R_y(yaw) (p - center)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormTransform {
    /// Mean root `(x, z)`.
    pub center: [f64; 2],
    pub yaw: f64,
}

impl NormTransform {
    pub const IDENTITY: NormTransform = NormTransform {
        center: [0.0, 0.0],
        yaw: 0.0,
    };

    /// Fits on the listed frames (all frames when empty).
    pub fn fit(seq: &MotionSequence, frames: &[usize]) -> Result<Self> {
        let all: Vec<usize>;
        let frames = if frames.is_empty() {
            all = (0..seq.len()).collect();
            &all[..]
        } else {
            frames
        };
        if let Some(&t) = frames.iter().find(|&&t| t >= seq.len()) {
            return Err(Error::Contract(format!(
                "frame {t} outside a {}-frame sequence",
                seq.len()
            )));
        }
        let n = frames.len() as f64;
        let mut center = [0.0; 2];
        for &t in frames {
            let p = seq.frames()[t].root_pos;
            center[0] += p[0] / n;
            center[1] += p[2] / n;
        }
        let mut facing = [0.0; 3];
        for &t in frames.iter().take(FACING_FRAMES) {
            facing = geometry::add(facing, frame_facing(seq, t)?);
        }
        facing[1] = 0.0;
        let yaw = if geometry::norm(facing) > 1e-9 {
            -facing[0].atan2(facing[2])
        } else {
            0.0
        };
        Ok(NormTransform { center, yaw })
    }

    fn rotation(&self) -> RotationMatrix {
        RotationMatrix::about_y(self.yaw)
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        self.rotation()
            .apply([p[0] - self.center[0], p[1], p[2] - self.center[1]])
    }

    pub fn invert_point(&self, p: Vec3) -> Vec3 {
        let q = self.rotation().transpose().apply(p);
        [q[0] + self.center[0], q[1], q[2] + self.center[1]]
    }

    fn map_pose(&self, pose: &Pose, inverse: bool) -> Result<Pose> {
        let r = if inverse {
            self.rotation().transpose()
        } else {
            self.rotation()
        };
        let root_rot = r.mul(&rot6_to_matrix(&pose.rot[0])?);
        let mut rot = pose.rot.clone();
        rot[0] = geometry::matrix_to_rot6(&root_rot);
        let root_pos = if inverse {
            self.invert_point(pose.root_pos)
        } else {
            self.apply_point(pose.root_pos)
        };
        Ok(Pose { root_pos, rot })
    }

    pub fn apply(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let frames = seq
            .frames()
            .iter()
            .map(|p| self.map_pose(p, false))
            .collect::<Result<_>>()?;
        seq.with_frames(frames)
    }

    pub fn invert(&self, seq: &MotionSequence) -> Result<MotionSequence> {
        let frames = seq
            .frames()
            .iter()
            .map(|p| self.map_pose(p, true))
            .collect::<Result<_>>()?;
        seq.with_frames(frames)
    }
}

fn frame_facing(seq: &MotionSequence, t: usize) -> Result<Vec3> {
    let skel = seq.skeleton();
    match hips(skel) {
        Some((l, r)) => {
            let g = seq.global(t)?;
            Ok(geometry::cross(UP, geometry::sub(g.positions[r], g.positions[l])))
        }
        None => Ok(rot6_to_matrix(&seq.frames()[t].rot[0])?.column(2)),
    }
}

/// Centers and rotates a window using all of its frames.
pub fn apply_normalization(seq: &MotionSequence) -> Result<MotionSequence> {
    NormTransform::fit(seq, &[])?.apply(seq)
}

/// Per-channel mean and standard deviation of flattened global joint
/// positions (`J * 3` channels), used to standardize position errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub pos_mean: Vec<f64>,
    pub pos_std: Vec<f64>,
}

impl NormStats {
    pub fn identity(joints: usize) -> Self {
        NormStats {
            pos_mean: vec![0.0; joints * 3],
            pos_std: vec![1.0; joints * 3],
        }
    }

    pub fn channels(&self) -> usize {
        self.pos_mean.len()
    }

    /// Standardizes flattened positions in place.
    pub fn standardize(&self, flat: &mut [f64]) -> Result<()> {
        if flat.len() != self.channels() {
            return Err(Error::Contract(format!(
                "{} position channels, statistics cover {}",
                flat.len(),
                self.channels()
            )));
        }
        for ((x, m), s) in flat.iter_mut().zip(&self.pos_mean).zip(&self.pos_std) {
            *x = (*x - m) / s;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Statistics over every frame of the (already normalized) training windows.
pub fn normalize_stats(windows: &[MotionSequence]) -> Result<NormStats> {
    let pos = windows
        .iter()
        .map(PositionSequence::from_motion)
        .collect::<Result<Vec<_>>>()?;
    position_stats(&pos)
}

/// [`normalize_stats`] for position-only windows.
pub fn position_stats(windows: &[PositionSequence]) -> Result<NormStats> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Contract("no windows for statistics".into()))?;
    let c = first.joints * 3;
    let mut sum = vec![0.0; c];
    let mut sq = vec![0.0; c];
    let mut n = 0usize;
    for w in windows {
        if w.joints * 3 != c {
            return Err(Error::Contract("windows use different skeletons".into()));
        }
        for f in &w.frames {
            for (k, v) in f.iter().flatten().enumerate() {
                sum[k] += v;
                sq[k] += v * v;
            }
            n += 1;
        }
    }
    let n = n as f64;
    let pos_mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let pos_std = sq
        .iter()
        .zip(&pos_mean)
        .map(|(q, m)| {
            let s = (q / n - m * m).max(0.0).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        })
        .collect();
    Ok(NormStats { pos_mean, pos_std })
}

/// XZ-centering of position-only data on the mean XZ of joint 0. Without
/// joint rotations or names there is no facing direction to undo.
pub fn center_positions(seq: &PositionSequence) -> Result<PositionSequence> {
    let n = seq.len() as f64;
    let (cx, cz) = seq
        .frames
        .iter()
        .fold((0.0, 0.0), |(x, z), f| (x + f[0][0] / n, z + f[0][2] / n));
    let frames = seq
        .frames
        .iter()
        .map(|f| f.iter().map(|p| [p[0] - cx, p[1], p[2] - cz]).collect())
        .collect();
    PositionSequence::new(seq.joints, frames)
}
