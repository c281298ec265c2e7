//! Motion clips, in-betweening tasks and everything that feeds them:
//! CSV ingestion, sliding windows, weighted task sampling, XZ-center /
//! Y-rotate normalization and a synthetic motion generator.

pub mod csv;
pub mod normalize;
pub mod sampler;
pub mod synth;
pub mod window;

use std::sync::Arc;

use crate::geometry::{self, FkPose, Quaternion, Rot6, Skeleton, Vec3};
use crate::{Error, Result};

pub use self::csv::{
    load_csv, load_csv_gapped, load_positions_csv, load_quaternions, save_csv, save_csv_gapped, save_positions_csv,
    GappedSequence,
};
pub use normalize::{apply_normalization, center_positions, normalize_stats, position_stats, NormStats, NormTransform};
pub use sampler::{sample_task, sample_task_with, Sampler, SamplerConfig, TaskBatch};
pub use synth::{synth_motion, SynthKind};
pub use window::{make_position_windows, make_windows};

/// Root position plus one ortho6D rotation per joint (root global, others
/// parent-relative).
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub root_pos: Vec3,
    pub rot: Vec<Rot6>,
}

impl Pose {
    pub fn rest(joints: usize) -> Self {
        Pose {
            root_pos: [0.0; 3],
            rot: vec![Rot6::IDENTITY; joints],
        }
    }

    pub fn from_quaternions(root_pos: Vec3, quats: &[Quaternion]) -> Self {
        Pose {
            root_pos,
            rot: quats.iter().map(|q| geometry::matrix_to_rot6(&q.to_matrix())).collect(),
        }
    }

    pub fn translated(&self, delta: Vec3) -> Self {
        Pose {
            root_pos: geometry::add(self.root_pos, delta),
            rot: self.rot.clone(),
        }
    }

    /// Local quaternions with `w >= 0`.
    pub fn quaternions(&self) -> Result<Vec<Quaternion>> {
        self.rot
            .iter()
            .map(|r| Ok(Quaternion::from_matrix(&geometry::rot6_to_matrix(r)?)))
            .collect()
    }
}

/// Uniformly sampled sequence of poses bound to a skeleton.
#[derive(Clone, Debug)]
pub struct MotionSequence {
    skeleton: Arc<Skeleton>,
    frames: Vec<Pose>,
    frame_rate: f64,
}

pub const DEFAULT_FRAME_RATE: f64 = 30.0;

impl MotionSequence {
    pub fn new(skeleton: Arc<Skeleton>, frames: Vec<Pose>, frame_rate: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract("motion sequence needs at least one frame".into()));
        }
        let j = skeleton.joint_count();
        if let Some((i, p)) = frames.iter().enumerate().find(|(_, p)| p.rot.len() != j) {
            return Err(Error::Contract(format!(
                "frame {i} has {} rotations, skeleton has {j} joints",
                p.rot.len()
            )));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::Contract(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        Ok(MotionSequence {
            skeleton,
            frames,
            frame_rate,
        })
    }

    pub fn skeleton(&self) -> &Arc<Skeleton> {
        &self.skeleton
    }

    pub fn frames(&self) -> &[Pose] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn joint_count(&self) -> usize {
        self.skeleton.joint_count()
    }

    /// Copy of frames `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames.len() {
            return Err(Error::Contract(format!(
                "slice {start}..{} out of a {}-frame sequence",
                start + len,
                self.frames.len()
            )));
        }
        Ok(MotionSequence {
            skeleton: self.skeleton.clone(),
            frames: self.frames[start..start + len].to_vec(),
            frame_rate: self.frame_rate,
        })
    }

    pub fn translated(&self, delta: Vec3) -> Self {
        MotionSequence {
            skeleton: self.skeleton.clone(),
            frames: self.frames.iter().map(|p| p.translated(delta)).collect(),
            frame_rate: self.frame_rate,
        }
    }

    pub fn global(&self, t: usize) -> Result<FkPose> {
        let p = &self.frames[t];
        geometry::fk(&self.skeleton, p.root_pos, &p.rot)
    }

    pub fn globals(&self) -> Result<Vec<FkPose>> {
        (0..self.len()).map(|t| self.global(t)).collect()
    }

    pub fn with_frames(&self, frames: Vec<Pose>) -> Result<Self> {
        MotionSequence::new(self.skeleton.clone(), frames, self.frame_rate)
    }
}

/// Global joint positions only (no rotations), one `Vec<Vec3>` per frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PositionSequence {
    pub joints: usize,
    pub frames: Vec<Vec<Vec3>>,
}

impl PositionSequence {
    pub fn new(joints: usize, frames: Vec<Vec<Vec3>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Contract("position sequence needs at least one frame".into()));
        }
        if frames.iter().any(|f| f.len() != joints) {
            return Err(Error::Contract(format!("every frame must hold {joints} joints")));
        }
        Ok(PositionSequence { joints, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames.len() {
            return Err(Error::Contract(format!(
                "slice {start}..{} out of a {}-frame sequence",
                start + len,
                self.frames.len()
            )));
        }
        PositionSequence::new(self.joints, self.frames[start..start + len].to_vec())
    }

    pub fn from_motion(seq: &MotionSequence) -> Result<Self> {
        let frames = seq.globals()?.into_iter().map(|g| g.positions).collect();
        PositionSequence::new(seq.joint_count(), frames)
    }
}

/// Which frames of a window are given (key-frames) and which must be filled.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TaskPattern {
    len: usize,
    keys: Vec<usize>,
    missing: Vec<usize>,
}

impl TaskPattern {
    pub fn new(len: usize, mut keys: Vec<usize>) -> Result<Self> {
        keys.sort_unstable();
        keys.dedup();
        if keys.is_empty() {
            return Err(Error::Contract("a task needs at least one key-frame".into()));
        }
        if let Some(&k) = keys.iter().find(|&&k| k >= len) {
            return Err(Error::Contract(format!("key-frame {k} outside a {len}-frame window")));
        }
        let missing = (0..len).filter(|t| keys.binary_search(t).is_err()).collect();
        Ok(TaskPattern { len, keys, missing })
    }

    /// `past` leading keys, a gap of `n_in` frames, `future` trailing keys.
    /// With a stride, every `stride`-th frame counted from the last leading
    /// key is also a key.
    pub fn gap(past: usize, n_in: usize, future: usize, stride: Option<usize>) -> Result<Self> {
        if past == 0 {
            return Err(Error::Contract("at least one leading key-frame is required".into()));
        }
        let len = past + n_in + future;
        let mut keys: Vec<usize> = (0..past).chain(past + n_in..len).collect();
        if let Some(s) = stride.filter(|&s| s > 0) {
            let anchor = past - 1;
            keys.extend((past..past + n_in).filter(|t| (t - anchor).is_multiple_of(s)));
        }
        TaskPattern::new(len, keys)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn keys(&self) -> &[usize] {
        &self.keys
    }

    pub fn missing(&self) -> &[usize] {
        &self.missing
    }

    /// The last key-frame preceding the first missing frame; `None` when
    /// the window starts with a missing frame.
    pub fn reference_frame(&self) -> Option<usize> {
        match self.missing.first() {
            None => self.keys.last().copied(),
            Some(&m) => self.keys.iter().copied().take_while(|&k| k < m).last(),
        }
    }

    /// Every missing frame has a key on both sides.
    pub fn supports_interpolation(&self) -> bool {
        match (
            self.keys.first(),
            self.keys.last(),
            self.missing.first(),
            self.missing.last(),
        ) {
            (_, _, None, _) => true,
            (Some(&k0), Some(&k1), Some(&m0), Some(&m1)) => k0 < m0 && m1 < k1,
            _ => false,
        }
    }

    /// Nearest keys `(before, after)` of frame `t`.
    pub fn bracket(&self, t: usize) -> (Option<usize>, Option<usize>) {
        let i = self.keys.partition_point(|&k| k <= t);
        let before = if i > 0 { Some(self.keys[i - 1]) } else { None };
        let after = self.keys[i..].iter().copied().find(|&k| k > t);
        (before, after)
    }
}

/// A window of motion together with its key/missing split.
#[derive(Clone, Debug)]
pub struct InbetweenTask {
    pub sequence: MotionSequence,
    pub pattern: TaskPattern,
}

impl InbetweenTask {
    pub fn new(sequence: MotionSequence, pattern: TaskPattern) -> Result<Self> {
        if sequence.len() != pattern.len() {
            return Err(Error::Contract(format!(
                "pattern covers {} frames, sequence has {}",
                pattern.len(),
                sequence.len()
            )));
        }
        Ok(InbetweenTask { sequence, pattern })
    }
}
