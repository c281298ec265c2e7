//! Procedural motion for training and tests without licensed capture data.
//!
//! Joint rotations are sums of low-frequency sinusoids about fixed random
//! axes. Skeletons with recognizable hips also get an anti-phase leg swing.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::normalize::hips;
use super::{MotionSequence, Pose, DEFAULT_FRAME_RATE};
use crate::geometry::{self, slerp, Quaternion, Skeleton, Vec3};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    SinusoidWalk,
    FigureEight,
    TwoPoseBlend,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [SynthKind::SinusoidWalk, SynthKind::FigureEight, SynthKind::TwoPoseBlend];

    pub fn name(self) -> &'static str {
        match self {
            SynthKind::SinusoidWalk => "sinusoid-walk",
            SynthKind::FigureEight => "figure-eight",
            SynthKind::TwoPoseBlend => "two-pose-blend",
        }
    }

    fn salt(self) -> u64 {
        match self {
            SynthKind::SinusoidWalk => 0x5157,
            SynthKind::FigureEight => 0xf18e,
            SynthKind::TwoPoseBlend => 0x2b1e,
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SynthKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown motion kind `{s}`")))
    }
}

const ROOT_HEIGHT: f64 = 0.9;

fn unit_vector(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n = geometry::norm(v);
        if n > 0.1 && n <= 1.0 {
            return geometry::scale(v, 1.0 / n);
        }
    }
}

/// Sum of a few sinusoids.
#[derive(Clone, Debug)]
struct Wave {
    terms: Vec<(f64, f64, f64)>,
}

impl Wave {
    fn random(rng: &mut ChaCha8Rng, amp: f64, base_hz: f64) -> Self {
        let terms = (1..=3)
            .map(|k| {
                let k = k as f64;
                (
                    amp * rng.random_range(0.3..1.0) / k,
                    TAU * base_hz * k * rng.random_range(0.7..1.3),
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        Wave { terms }
    }

    fn at(&self, t: f64) -> f64 {
        self.terms.iter().map(|(a, w, p)| a * (w * t + p).sin()).sum()
    }
}

struct JointCurves {
    axes: Vec<(Vec3, Vec3)>,
    waves: Vec<(Wave, Wave)>,
    legs: Option<(usize, usize, f64)>,
}

impl JointCurves {
    fn new(rng: &mut ChaCha8Rng, skel: &Skeleton, amp: f64) -> Self {
        let j = skel.joint_count();
        let axes = (0..j).map(|_| (unit_vector(rng), unit_vector(rng))).collect();
        let waves = (0..j)
            .map(|_| (Wave::random(rng, amp, 0.6), Wave::random(rng, amp * 0.5, 0.3)))
            .collect();
        let legs = hips(skel).map(|(l, r)| (l, r, rng.random_range(0.4..0.7)));
        JointCurves { axes, waves, legs }
    }

    fn local(&self, j: usize, t: f64, gait: f64) -> Quaternion {
        let (a, b) = self.axes[j];
        let (wa, wb) = &self.waves[j];
        let mut q = Quaternion::from_axis_angle(a, wa.at(t)).mul(Quaternion::from_axis_angle(b, wb.at(t)));
        if let Some((l, r, swing)) = self.legs {
            if j == l || j == r {
                let phase = if j == l { 0.0 } else { PI };
                let s = Quaternion::from_axis_angle([1.0, 0.0, 0.0], swing * (gait + phase).sin());
                q = s.mul(Quaternion::from_axis_angle(a, 0.2 * wa.at(t)));
            }
        }
        q
    }
}

fn yaw(angle: f64) -> Quaternion {
    Quaternion::from_axis_angle([0.0, 1.0, 0.0], angle)
}

/// Deterministic `n_frames` of motion of the given kind at 30 Hz.
pub fn synth_motion(kind: SynthKind, skeleton: Arc<Skeleton>, n_frames: usize, seed: u64) -> Result<MotionSequence> {
    if n_frames == 0 {
        return Err(Error::Config("synthetic motion needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ kind.salt().rotate_left(32));
    let fps = DEFAULT_FRAME_RATE;
    let j = skeleton.joint_count();
    let curves = JointCurves::new(&mut rng, &skeleton, 0.35);
    let gait_hz: f64 = rng.random_range(0.8..1.2);
    let gw = TAU * gait_hz;
    let bob = rng.random_range(0.0..TAU);

    let frames = match kind {
        SynthKind::SinusoidWalk => {
            let v: f64 = rng.random_range(0.8..1.6);
            let heading = PI / 2.0 + rng.random_range(-0.1..0.1);
            (0..n_frames)
                .map(|f| {
                    let t = f as f64 / fps;
                    let root = [
                        v * t + 0.25 * v / (2.0 * gw) * (2.0 * gw * t).sin(),
                        ROOT_HEIGHT + 0.03 * (2.0 * gw * t + bob).sin(),
                        0.05 * (gw * t).sin(),
                    ];
                    let root_q = yaw(heading + 0.1 * (gw * t).sin()).mul(curves.local(0, t, gw * t));
                    pose(root, root_q, &curves, j, t, gw * t)
                })
                .collect()
        }
        SynthKind::FigureEight => {
            let period: f64 = rng.random_range(6.0..10.0);
            let w = TAU / period;
            let a: f64 = rng.random_range(1.5..2.5);
            (0..n_frames)
                .map(|f| {
                    let t = f as f64 / fps;
                    let root = [
                        a * (w * t).sin(),
                        ROOT_HEIGHT + 0.03 * (2.0 * gw * t + bob).sin(),
                        0.5 * a * (2.0 * w * t).sin(),
                    ];
                    let vel = [a * w * (w * t).cos(), a * w * (2.0 * w * t).cos()];
                    let root_q = yaw(vel[0].atan2(vel[1])).mul(curves.local(0, t, gw * t));
                    pose(root, root_q, &curves, j, t, gw * t)
                })
                .collect()
        }
        SynthKind::TwoPoseBlend => {
            let poses: Vec<Vec<Quaternion>> = (0..2)
                .map(|_| {
                    (0..j)
                        .map(|_| Quaternion::from_axis_angle(unit_vector(&mut rng), rng.random_range(-0.8..0.8)))
                        .collect()
                })
                .collect();
            let yaws = [rng.random_range(-PI..PI), rng.random_range(-PI..PI)];
            let p0 = [rng.random_range(-1.0..1.0), ROOT_HEIGHT, rng.random_range(-1.0..1.0)];
            let (dir, len): (f64, f64) = (rng.random_range(0.0..TAU), rng.random_range(0.5..1.5));
            let step = [len * dir.cos(), 0.0, len * dir.sin()];
            let p1 = geometry::add(p0, step);
            let period: f64 = rng.random_range(1.5..3.0);
            (0..n_frames)
                .map(|f| {
                    let t = f as f64 / fps;
                    let s = 0.5 - 0.5 * (TAU * t / period).cos();
                    let quats: Vec<Quaternion> = (0..j)
                        .map(|k| {
                            let base = if k == 0 {
                                slerp(yaw(yaws[0]).mul(poses[0][0]), yaw(yaws[1]).mul(poses[1][0]), s)
                            } else {
                                slerp(poses[0][k], poses[1][k], s)
                            };
                            let jitter = Quaternion::from_axis_angle(curves.axes[k].0, 0.1 * curves.waves[k].0.at(t));
                            base.mul(jitter)
                        })
                        .collect();
                    Pose::from_quaternions(geometry::lerp(p0, p1, s), &quats)
                })
                .collect()
        }
    };
    MotionSequence::new(skeleton, frames, fps)
}

fn pose(root: Vec3, root_q: Quaternion, curves: &JointCurves, joints: usize, t: f64, gait: f64) -> Pose {
    let mut quats = Vec::with_capacity(joints);
    quats.push(root_q);
    quats.extend((1..joints).map(|k| curves.local(k, t, gait)));
    Pose::from_quaternions(root, &quats)
}
