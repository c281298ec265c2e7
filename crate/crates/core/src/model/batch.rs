//! Plain-`f64` preparation of a batch: delta-referenced key-frame features,
//! baseline poses and (optionally) training targets.

use super::{InputDelta, ModelConfig, OutputDelta};
use crate::baselines;
use crate::geometry::{self, Quaternion};
use crate::motion::{InbetweenTask, Pose, TaskPattern};
use crate::par::Exec;
use crate::{Error, Result};

/// Global joint positions and quaternions of the missing and key frames.
#[derive(Clone, Debug, Default)]
pub struct Targets {
    /// `[B, nM, J, 3]`
    pub missing_pos: Vec<f64>,
    /// `[B, nM, J, 4]`
    pub missing_quat: Vec<f64>,
    /// `[B, nK, J, 3]`
    pub key_pos: Vec<f64>,
    /// `[B, nK, J, 4]`
    pub key_quat: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PreparedBatch {
    pub pattern: TaskPattern,
    pub batch: usize,
    pub joints: usize,
    /// `[B, nK, J * 9]`
    pub key_features: Vec<f64>,
    /// Baseline local parameters `[B, nM, 3 + 6J]` for missing frames.
    pub base_missing: Vec<f64>,
    /// Baseline local parameters `[B, nK, 3 + 6J]` for key-frames.
    pub base_keys: Vec<f64>,
    pub targets: Option<Targets>,
}

impl PreparedBatch {
    pub fn n_keys(&self) -> usize {
        self.pattern.keys().len()
    }

    pub fn n_missing(&self) -> usize {
        self.pattern.missing().len()
    }
}

fn local_params(p: &Pose) -> Vec<f64> {
    let mut v = p.root_pos.to_vec();
    v.extend(p.rot.iter().flat_map(|r| r.0));
    v
}

/// The last context frame of a task.
pub fn reference_frame(pattern: &TaskPattern) -> Result<usize> {
    pattern
        .reference_frame()
        .ok_or_else(|| Error::Unsupported("the first missing frame has no preceding key-frame to reference".into()))
}

struct Prepared {
    key_features: Vec<f64>,
    base_missing: Vec<f64>,
    base_keys: Vec<f64>,
    targets: Option<Targets>,
}

fn prepare_one(cfg: &ModelConfig, task: &InbetweenTask, with_targets: bool) -> Result<Prepared> {
    let seq = &task.sequence;
    let p = &task.pattern;
    let j = cfg.joints;
    if seq.joint_count() != j {
        return Err(Error::Config(format!(
            "model expects {j} joints, sequence has {}",
            seq.joint_count()
        )));
    }
    let frames = seq.frames();
    let needs_ref = cfg.input_delta == InputDelta::LastFrame || cfg.output_delta == OutputDelta::LastFrame;
    let r = if needs_ref { Some(reference_frame(p)?) } else { None };

    let mut key_features = Vec::with_capacity(p.keys().len() * j * 9);
    let reference = match (cfg.input_delta, r) {
        (InputDelta::LastFrame, Some(r)) => {
            let f = &frames[r];
            let mut v = f.root_pos.to_vec();
            v.extend(f.rot[0].0);
            v
        }
        _ => vec![0.0; 9],
    };
    for &k in p.keys() {
        let g = seq.global(k)?;
        for (pos, rot) in g.positions.iter().zip(&frames[k].rot) {
            key_features.extend(pos.iter().zip(&reference[..3]).map(|(a, b)| a - b));
            key_features.extend(rot.0.iter().zip(&reference[3..]).map(|(a, b)| a - b));
        }
    }

    let width = 3 + 6 * j;
    let (base_missing, base_keys) = match cfg.output_delta {
        OutputDelta::Interp => {
            if !p.supports_interpolation() {
                return Err(Error::Unsupported(
                    "output mode interp needs a key-frame before the first and after the last missing frame".into(),
                ));
            }
            let interp = baselines::slerp_interpolate(task)?;
            let m = p
                .missing()
                .iter()
                .flat_map(|&t| local_params(&interp.frames()[t]))
                .collect();
            let k = p.keys().iter().flat_map(|&t| local_params(&frames[t])).collect();
            (m, k)
        }
        OutputDelta::LastFrame => {
            let rp = local_params(&frames[r.expect("reference required")]);
            (rp.repeat(p.missing().len()), rp.repeat(p.keys().len()))
        }
        OutputDelta::None => (vec![0.0; p.missing().len() * width], vec![0.0; p.keys().len() * width]),
    };

    let targets = if with_targets {
        let mut t = Targets::default();
        for (idx, pos, quat) in [
            (p.missing(), &mut t.missing_pos, &mut t.missing_quat),
            (p.keys(), &mut t.key_pos, &mut t.key_quat),
        ] {
            for &f in idx {
                let g = seq.global(f)?;
                pos.extend(g.positions.iter().flatten());
                quat.extend(g.rotations.iter().flat_map(|m| Quaternion::from_matrix(m).to_array()));
            }
        }
        Some(t)
    } else {
        None
    };
    Ok(Prepared {
        key_features,
        base_missing,
        base_keys,
        targets,
    })
}

/// Prepares tasks that share one pattern.
pub fn prepare(cfg: &ModelConfig, tasks: &[InbetweenTask], with_targets: bool, exec: Exec) -> Result<PreparedBatch> {
    let first = tasks.first().ok_or_else(|| Error::Contract("empty batch".into()))?;
    let pattern = first.pattern.clone();
    if tasks.iter().any(|t| t.pattern != pattern) {
        return Err(Error::Contract("tasks in a batch must share one pattern".into()));
    }
    if pattern.missing().is_empty() {
        return Err(Error::Contract("task has no missing frames".into()));
    }
    if pattern.len() > cfg.max_frame_index {
        return Err(Error::Config(format!(
            "frame index {} exceeds max_frame_index {}",
            pattern.len() - 1,
            cfg.max_frame_index
        )));
    }
    let parts = exec.map(tasks, |t| prepare_one(cfg, t, with_targets));
    let mut out = PreparedBatch {
        pattern,
        batch: tasks.len(),
        joints: cfg.joints,
        key_features: Vec::new(),
        base_missing: Vec::new(),
        base_keys: Vec::new(),
        targets: with_targets.then(Targets::default),
    };
    for part in parts {
        let part = part?;
        out.key_features.extend(part.key_features);
        out.base_missing.extend(part.base_missing);
        out.base_keys.extend(part.base_keys);
        if let (Some(acc), Some(t)) = (out.targets.as_mut(), part.targets) {
            acc.missing_pos.extend(t.missing_pos);
            acc.missing_quat.extend(t.missing_quat);
            acc.key_pos.extend(t.key_pos);
            acc.key_quat.extend(t.key_quat);
        }
    }
    Ok(out)
}

/// Decodes flattened local parameters `[root(3), rot6 * J]` into a pose,
/// re-orthonormalizing each rotation.
pub fn pose_from_params(v: &[f64], joints: usize) -> Result<Pose> {
    let rot = (0..joints)
        .map(|k| {
            let mut r = [0.0; 6];
            r.copy_from_slice(&v[3 + 6 * k..9 + 6 * k]);
            let m = geometry::rot6_to_matrix(&geometry::Rot6(r))
                .map_err(|e| Error::Numeric(format!("predicted rotation of joint {k}: {e}")))?;
            Ok(geometry::matrix_to_rot6(&m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pose {
        root_pos: [v[0], v[1], v[2]],
        rot,
    })
}
