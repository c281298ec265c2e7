//! The delta-mode in-betweening transformer.
//!
//! Key-frames are encoded relative to a reference pose with self-attention;
//! missing-frame templates cross-attend to the key-frame encoding of each
//! level through the same blocks. A shared MLP decodes residuals for both
//! streams, which are added to a baseline (interpolation, last frame or
//! zero) and passed through forward kinematics.

pub mod batch;
mod config;
pub mod diagnostics;
pub mod net;
pub mod params;

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

pub use batch::{pose_from_params, prepare, PreparedBatch, Targets};
pub use config::{attention_scores, InputDelta, ModelConfig, OutputDelta};
pub use net::{Dropout, Forward, Rows, Stream};
pub use params::{Bound, ModelParams};

use crate::autograd::{checkpoint, Graph, Tensor};
use crate::geometry::Skeleton;
use crate::motion::{InbetweenTask, MotionSequence};
use crate::par::Exec;
use crate::{Error, Result};

pub const MODEL_CONFIG_FILE: &str = "model_config.json";
pub const SKELETON_FILE: &str = "skeleton.json";
/// Tasks per forward pass during inference.
pub const INFERENCE_BATCH: usize = 64;

#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub params: ModelParams<f32>,
    pub skeleton: Arc<Skeleton>,
}

impl Model {
    pub fn new(cfg: ModelConfig, skeleton: Arc<Skeleton>, seed: u64) -> Result<Self> {
        if cfg.joints != skeleton.joint_count() {
            return Err(Error::Config(format!(
                "model configured for {} joints, skeleton has {}",
                cfg.joints,
                skeleton.joint_count()
            )));
        }
        let params = ModelParams::init(&cfg, seed)?;
        Ok(Model { cfg, params, skeleton })
    }

    /// Fills the missing frames of tasks sharing one pattern. Key-frames are
    /// copied from the input.
    pub fn predict_batch(&self, tasks: &[InbetweenTask], exec: Exec) -> Result<Vec<MotionSequence>> {
        let batch = prepare(&self.cfg, tasks, false, exec)?;
        let mut g = Graph::<f32>::with_exec(exec);
        let pv = self.params.bind_frozen(&mut g);
        let out = net::forward(&mut g, &pv, &self.cfg, &self.skeleton, &batch, &mut Dropout::off())?;
        let local = g.value(out.pred.local).to_f64_vec();
        if local.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prediction".into()));
        }
        let width = self.cfg.output_channels();
        let nm = batch.n_missing();
        tasks
            .iter()
            .enumerate()
            .map(|(b, task)| {
                let mut frames = task.sequence.frames().to_vec();
                for (i, &t) in batch.pattern.missing().iter().enumerate() {
                    let row = (b * nm + i) * width;
                    frames[t] = pose_from_params(&local[row..row + width], self.cfg.joints)?;
                }
                task.sequence.with_frames(frames)
            })
            .collect()
    }

    /// Like [`Model::predict_batch`] for tasks with arbitrary patterns;
    /// output order follows input order.
    pub fn predict(&self, tasks: &[InbetweenTask], exec: Exec) -> Result<Vec<MotionSequence>> {
        let mut out: Vec<Option<MotionSequence>> = vec![None; tasks.len()];
        let mut todo: Vec<usize> = (0..tasks.len()).collect();
        while let Some(&first) = todo.first() {
            let pattern = &tasks[first].pattern;
            let (same, rest): (Vec<usize>, Vec<usize>) = todo.iter().partition(|&&i| &tasks[i].pattern == pattern);
            for chunk in same.chunks(INFERENCE_BATCH) {
                let group: Vec<InbetweenTask> = chunk.iter().map(|&i| tasks[i].clone()).collect();
                for (&i, seq) in chunk.iter().zip(self.predict_batch(&group, exec)?) {
                    out[i] = Some(seq);
                }
            }
            todo = rest;
        }
        Ok(out.into_iter().map(|s| s.expect("every task predicted")).collect())
    }

    /// Writes parameters, `extra` tensors, config and skeleton into `dir`.
    pub fn save_with(&self, dir: &Path, extra: &[(String, &Tensor<f32>)]) -> Result<()> {
        let mut all: Vec<(String, &Tensor<f32>)> =
            self.params.entries().iter().map(|(n, t)| (n.clone(), &**t)).collect();
        all.extend(extra.iter().map(|(n, t)| (n.clone(), *t)));
        checkpoint::save(dir, &all)?;
        self.cfg.save(&dir.join(MODEL_CONFIG_FILE))?;
        self.skeleton.save(&dir.join(SKELETON_FILE))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.save_with(dir, &[])
    }

    /// Loads a model and returns the tensors that are not parameters.
    pub fn load_with_extras(dir: &Path) -> Result<(Self, Vec<(String, Tensor<f32>)>)> {
        let cfg = ModelConfig::load(&dir.join(MODEL_CONFIG_FILE))?;
        let skeleton = Arc::new(Skeleton::load(&dir.join(SKELETON_FILE))?);
        let named = checkpoint::load(dir)?;
        let expected: HashSet<String> = params::param_names(&cfg).into_iter().collect();
        let (params, extras): (Vec<_>, Vec<_>) = named.into_iter().partition(|(n, _)| expected.contains(n));
        let params = ModelParams::from_named(&cfg, params)?;
        let model = Model { cfg, params, skeleton };
        if model.cfg.joints != model.skeleton.joint_count() {
            return Err(Error::Config(
                "checkpoint skeleton does not match its model config".into(),
            ));
        }
        Ok((model, extras))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Self::load_with_extras(dir)?.0)
    }
}

#[cfg(test)]
mod tests;
