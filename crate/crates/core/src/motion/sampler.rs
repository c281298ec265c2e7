//! Weighted task sampling.
//!
//! The gap length `n_in` is drawn with probability proportional to
//! `1 / n_in`, once per batch, so every task in a batch has the same shape.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InbetweenTask, MotionSequence, TaskPattern};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub past_keys: usize,
    pub future_keys: usize,
    /// Candidate gap lengths.
    pub n_in: Vec<usize>,
    pub keyframe_stride: Option<usize>,
    pub window_len: usize,
    pub batch_size: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::lafan1()
    }
}

impl SamplerConfig {
    /// Ten past keys, one future key, gaps 5..=39, 50-frame windows.
    pub fn lafan1() -> Self {
        SamplerConfig {
            past_keys: 10,
            future_keys: 1,
            n_in: (5..=39).collect(),
            keyframe_stride: None,
            window_len: 50,
            batch_size: 64,
        }
    }

    /// One key on each side plus every 6th frame inside the gap.
    pub fn anidance() -> Self {
        SamplerConfig {
            past_keys: 1,
            future_keys: 1,
            n_in: (5..=39).collect(),
            keyframe_stride: Some(6),
            window_len: 50,
            batch_size: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let max = self
            .n_in
            .iter()
            .copied()
            .max()
            .ok_or_else(|| Error::Config("n_in set is empty".into()))?;
        if self.n_in.contains(&0) {
            return Err(Error::Config("n_in values must be positive".into()));
        }
        if self.past_keys == 0 {
            return Err(Error::Config("past_keys must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.keyframe_stride == Some(0) {
            return Err(Error::Config("keyframe_stride must be positive".into()));
        }
        let need = self.past_keys + self.future_keys + max;
        if need > self.window_len {
            return Err(Error::Config(format!(
                "past_keys + future_keys + max n_in = {need} exceeds window_len {}",
                self.window_len
            )));
        }
        Ok(())
    }

    /// Normalized selection probabilities, aligned with `n_in`.
    pub fn n_in_probabilities(&self) -> Vec<f64> {
        let w: Vec<f64> = self.n_in.iter().map(|&n| 1.0 / n as f64).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    }

    pub fn pattern(&self, n_in: usize) -> Result<TaskPattern> {
        TaskPattern::gap(self.past_keys, n_in, self.future_keys, self.keyframe_stride)
    }
}

/// Tasks sharing one key/missing layout.
#[derive(Clone, Debug)]
pub struct TaskBatch {
    pub pattern: TaskPattern,
    pub tasks: Vec<InbetweenTask>,
}

impl TaskBatch {
    pub fn new(tasks: Vec<InbetweenTask>) -> Result<Self> {
        let pattern = tasks
            .first()
            .ok_or_else(|| Error::Contract("empty batch".into()))?
            .pattern
            .clone();
        if tasks.iter().any(|t| t.pattern != pattern) {
            return Err(Error::Contract("tasks in a batch must share one pattern".into()));
        }
        Ok(TaskBatch { pattern, tasks })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Cuts a task with a given gap length out of a uniformly chosen window at a
/// uniformly chosen start.
pub fn sample_task_with<R: Rng + ?Sized>(
    cfg: &SamplerConfig,
    windows: &[MotionSequence],
    n_in: usize,
    rng: &mut R,
) -> Result<InbetweenTask> {
    if windows.is_empty() {
        return Err(Error::Sampling("no windows to sample from".into()));
    }
    let pattern = cfg.pattern(n_in)?;
    let w = &windows[rng.random_range(0..windows.len())];
    if w.len() < pattern.len() {
        return Err(Error::Sampling(format!(
            "window of {} frames cannot hold a {}-frame task",
            w.len(),
            pattern.len()
        )));
    }
    let start = rng.random_range(0..=w.len() - pattern.len());
    InbetweenTask::new(w.slice(start, pattern.len())?, pattern)
}

pub fn sample_task<R: Rng + ?Sized>(
    cfg: &SamplerConfig,
    windows: &[MotionSequence],
    rng: &mut R,
) -> Result<InbetweenTask> {
    let dist = WeightedIndex::new(cfg.n_in.iter().map(|&n| 1.0 / n as f64))
        .map_err(|e| Error::Config(format!("n_in weights: {e}")))?;
    let n_in = cfg.n_in[dist.sample(rng)];
    sample_task_with(cfg, windows, n_in, rng)
}

/// Seeded sampler owning its RNG.
#[derive(Clone, Debug)]
pub struct Sampler {
    cfg: SamplerConfig,
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let dist = WeightedIndex::new(cfg.n_in.iter().map(|&n| 1.0 / n as f64))
            .map_err(|e| Error::Config(format!("n_in weights: {e}")))?;
        Ok(Sampler {
            cfg,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn draw_n_in(&mut self) -> usize {
        self.cfg.n_in[self.dist.sample(&mut self.rng)]
    }

    pub fn sample_task(&mut self, windows: &[MotionSequence]) -> Result<InbetweenTask> {
        let n = self.draw_n_in();
        sample_task_with(&self.cfg, windows, n, &mut self.rng)
    }

    pub fn sample_batch(&mut self, windows: &[MotionSequence]) -> Result<TaskBatch> {
        let n = self.draw_n_in();
        let tasks = (0..self.cfg.batch_size)
            .map(|_| sample_task_with(&self.cfg, windows, n, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        TaskBatch::new(tasks)
    }
}
