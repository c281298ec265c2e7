//! Parameter-free in-betweeners.
//!
//! Each baseline returns the full window: key-frames are copied through and
//! missing frames are filled.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{self, slerp, Quaternion};
use crate::motion::{InbetweenTask, MotionSequence, Pose, PositionSequence, TaskPattern};
use crate::par::Exec;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    ZeroVelocity,
    SlerpInterp,
    /// Positions only.
    PosLerp,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ZeroVelocity => "zerovel",
            BaselineKind::SlerpInterp => "slerp",
            BaselineKind::PosLerp => "lerp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zerovel" | "zero-velocity" => Ok(BaselineKind::ZeroVelocity),
            "slerp" => Ok(BaselineKind::SlerpInterp),
            "lerp" => Ok(BaselineKind::PosLerp),
            _ => Err(Error::Config(format!(
                "unknown baseline `{s}` (expected zerovel, slerp or lerp)"
            ))),
        }
    }
}

/// Global-position task for position-only data.
#[derive(Clone, Debug)]
pub struct PositionTask {
    pub positions: PositionSequence,
    pub pattern: TaskPattern,
}

impl PositionTask {
    pub fn new(positions: PositionSequence, pattern: TaskPattern) -> Result<Self> {
        if positions.len() != pattern.len() {
            return Err(Error::Contract(format!(
                "pattern covers {} frames, sequence has {}",
                pattern.len(),
                positions.len()
            )));
        }
        Ok(PositionTask { positions, pattern })
    }
}

/// Interpolation weights `(a, b, t)` for every frame: the bracketing keys
/// and the fraction `(i - a) / (b - a)`. Keys map onto themselves.
fn brackets(p: &TaskPattern) -> Result<Vec<(usize, usize, f64)>> {
    if !p.supports_interpolation() {
        return Err(Error::Contract(
            "interpolation needs a key-frame on both sides of every missing frame".into(),
        ));
    }
    Ok((0..p.len())
        .map(|i| match p.bracket(i) {
            (Some(a), _) if a == i => (i, i, 0.0),
            (Some(a), Some(b)) => (a, b, (i - a) as f64 / (b - a) as f64),
            _ => unreachable!("checked by supports_interpolation"),
        })
        .collect())
}

/// Every missing frame repeats the most recent key-frame.
pub fn zero_velocity(task: &InbetweenTask) -> Result<MotionSequence> {
    let p = &task.pattern;
    let src = task.sequence.frames();
    let frames = (0..p.len())
        .map(|i| match p.bracket(i).0 {
            Some(k) => Ok(src[k].clone()),
            None => Err(Error::Contract(format!("missing frame {i} precedes every key-frame"))),
        })
        .collect::<Result<Vec<_>>>()?;
    task.sequence.with_frames(frames)
}

/// Linear root, SLERPed rotations (root included), piecewise between
/// consecutive keys.
pub fn slerp_interpolate(task: &InbetweenTask) -> Result<MotionSequence> {
    let src = task.sequence.frames();
    let quats: Vec<Option<Vec<Quaternion>>> = (0..src.len())
        .map(|i| {
            if task.pattern.keys().binary_search(&i).is_ok() {
                src[i].quaternions().map(Some)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<_>>()?;
    let frames = brackets(&task.pattern)?
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, t))| {
            if a == i {
                return src[i].clone();
            }
            let (qa, qb) = (quats[a].as_ref().unwrap(), quats[b].as_ref().unwrap());
            let q: Vec<Quaternion> = qa.iter().zip(qb).map(|(&x, &y)| slerp(x, y, t)).collect();
            Pose::from_quaternions(geometry::lerp(src[a].root_pos, src[b].root_pos, t), &q)
        })
        .collect();
    task.sequence.with_frames(frames)
}

/// Per-joint linear interpolation of global positions.
pub fn pos_lerp(task: &PositionTask) -> Result<PositionSequence> {
    let src = &task.positions.frames;
    let frames = brackets(&task.pattern)?
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, t))| {
            if a == i {
                return src[i].clone();
            }
            src[a]
                .iter()
                .zip(&src[b])
                .map(|(&x, &y)| geometry::lerp(x, y, t))
                .collect()
        })
        .collect();
    PositionSequence::new(task.positions.joints, frames)
}

/// Every missing frame repeats the most recent key-frame's positions.
pub fn pos_zero_velocity(task: &PositionTask) -> Result<PositionSequence> {
    let p = &task.pattern;
    let src = &task.positions.frames;
    let frames = (0..p.len())
        .map(|i| match p.bracket(i).0 {
            Some(k) => Ok(src[k].clone()),
            None => Err(Error::Contract(format!("missing frame {i} precedes every key-frame"))),
        })
        .collect::<Result<Vec<_>>>()?;
    PositionSequence::new(task.positions.joints, frames)
}

/// Runs a baseline on position-only data.
pub fn run_positions(kind: BaselineKind, task: &PositionTask) -> Result<PositionSequence> {
    match kind {
        BaselineKind::ZeroVelocity => pos_zero_velocity(task),
        BaselineKind::PosLerp => pos_lerp(task),
        BaselineKind::SlerpInterp => Err(Error::Unsupported(
            "SLERP needs joint rotations; position-only data has none".into(),
        )),
    }
}

/// Runs a rotation baseline.
pub fn run(kind: BaselineKind, task: &InbetweenTask) -> Result<MotionSequence> {
    match kind {
        BaselineKind::ZeroVelocity => zero_velocity(task),
        BaselineKind::SlerpInterp => slerp_interpolate(task),
        BaselineKind::PosLerp => Err(Error::Unsupported(
            "the positional LERP baseline works on position-only data".into(),
        )),
    }
}

/// Runs a rotation baseline over many tasks.
pub fn run_all(kind: BaselineKind, tasks: &[InbetweenTask], exec: Exec) -> Result<Vec<MotionSequence>> {
    exec.map(tasks, |t| run(kind, t)).into_iter().collect()
}
