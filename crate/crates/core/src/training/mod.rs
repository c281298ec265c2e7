//! Losses, learning-rate schedule, Adam and the training loop.

mod adam;
mod loss;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use loss::{compute_loss, position_loss, quaternion_loss, LossBreakdown, LossVars};

use crate::autograd::{Graph, Tensor};
use crate::model::{net, prepare, Dropout, Model};
use crate::motion::{InbetweenTask, MotionSequence, NormStats, Sampler, SamplerConfig};
use crate::par::Exec;
use crate::{Error, Result};

pub const TRAIN_STATE_FILE: &str = "train_state.json";
pub const NORM_STATS_FILE: &str = "norm_stats.json";
pub const FINAL_DIR: &str = "final";
pub const NAN_SNAPSHOT_DIR: &str = "nan_snapshot";

/// What happens after warmup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// Single drop by `lr_drop_factor` at `lr_drop_epoch`.
    Drop,
    /// Multiply by `lr_drop_factor` every `step_size` epochs.
    Step,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batches_per_epoch: usize,
    pub lr_max: f64,
    pub warmup_epochs: f64,
    pub lr_drop_epoch: f64,
    pub lr_drop_factor: f64,
    pub schedule: ScheduleKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub reconstruction_loss: bool,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batches_per_epoch: 256,
            lr_max: 2e-4,
            warmup_epochs: 50.0,
            lr_drop_epoch: 250.0,
            lr_drop_factor: 0.1,
            schedule: ScheduleKind::Drop,
            step_size: 200.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            reconstruction_loss: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 || self.batches_per_epoch == 0 {
            return bad("epochs and batches_per_epoch must be positive".into());
        }
        if !(self.warmup_epochs >= 0.0
            && self.warmup_epochs < self.lr_drop_epoch
            && self.lr_drop_epoch < self.epochs as f64)
        {
            return bad(format!(
                "schedule needs 0 <= warmup_epochs ({}) < lr_drop_epoch ({}) < epochs ({})",
                self.warmup_epochs, self.lr_drop_epoch, self.epochs
            ));
        }
        if !(self.lr_max > 0.0) || !(self.lr_drop_factor > 0.0) || !(self.step_size > 0.0) {
            return bad("lr_max, lr_drop_factor and step_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    /// Learning rate at a (fractional) epoch.
    pub fn lr_schedule(&self, epoch: f64) -> f64 {
        if epoch < self.warmup_epochs {
            return self.lr_max * epoch / self.warmup_epochs;
        }
        match self.schedule {
            ScheduleKind::Drop if epoch >= self.lr_drop_epoch => self.lr_max * self.lr_drop_factor,
            ScheduleKind::Drop => self.lr_max,
            ScheduleKind::Step => self.lr_max * self.lr_drop_factor.powi((epoch / self.step_size).floor() as i32),
        }
    }
}

/// One JSON line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub epoch: usize,
    pub step: u64,
    pub lr: f64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainState {
    pub epoch: usize,
    pub step: u64,
    pub adam_t: u64,
    pub config: TrainConfig,
}

pub struct Trainer {
    pub model: Model,
    pub cfg: TrainConfig,
    pub norm_stats: Option<NormStats>,
    sampler: Sampler,
    adam: Adam,
    dropout_rng: ChaCha8Rng,
    step: u64,
    exec: Exec,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig, sampler: SamplerConfig, exec: Exec) -> Result<Self> {
        cfg.validate()?;
        if sampler.window_len > model.cfg.max_frame_index {
            return Err(Error::Config(format!(
                "window_len {} exceeds the model's max_frame_index {}",
                sampler.window_len, model.cfg.max_frame_index
            )));
        }
        let adam = Adam::new(&model.params, cfg.beta1, cfg.beta2, cfg.eps);
        Ok(Trainer {
            sampler: Sampler::new(sampler, cfg.seed)?,
            dropout_rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd50f_0a7d),
            adam,
            model,
            cfg,
            norm_stats: None,
            step: 0,
            exec,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Current fractional epoch.
    pub fn epoch_position(&self) -> f64 {
        self.step as f64 / self.cfg.batches_per_epoch as f64
    }

    /// Loss of `tasks` (sharing one pattern) without dropout or updates.
    pub fn evaluate_loss(&self, tasks: &[InbetweenTask]) -> Result<LossBreakdown> {
        let batch = prepare(&self.model.cfg, tasks, true, self.exec)?;
        let mut g = Graph::<f32>::with_exec(self.exec);
        let pv = self.model.params.bind_frozen(&mut g);
        let fwd = net::forward(
            &mut g,
            &pv,
            &self.model.cfg,
            &self.model.skeleton,
            &batch,
            &mut Dropout::off(),
        )?;
        let targets = batch.targets.as_ref().expect("prepared with targets");
        Ok(compute_loss(&mut g, &fwd, targets, self.cfg.reconstruction_loss)?.breakdown)
    }

    /// One optimizer update on the given tasks at learning rate `lr`.
    pub fn step_on(&mut self, tasks: &[InbetweenTask], lr: f64) -> Result<LossBreakdown> {
        let batch = prepare(&self.model.cfg, tasks, true, self.exec)?;
        let grads = {
            let mut g = Graph::<f32>::with_exec(self.exec);
            let pv = self.model.params.bind(&mut g);
            let mut drop = Dropout {
                p: self.model.cfg.dropout,
                rng: Some(&mut self.dropout_rng),
            };
            let fwd = net::forward(&mut g, &pv, &self.model.cfg, &self.model.skeleton, &batch, &mut drop)?;
            let targets = batch.targets.as_ref().expect("prepared with targets");
            let loss = compute_loss(&mut g, &fwd, targets, self.cfg.reconstruction_loss)?;
            if !loss.breakdown.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss at step {}: {:?}",
                    self.step, loss.breakdown
                )));
            }
            g.backward(loss.total)?;
            let grads: Vec<Option<Tensor<f32>>> = pv.vars().iter().map(|(_, v)| g.grad(*v).cloned()).collect();
            if grads.iter().flatten().any(|t| !t.all_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient at step {}", self.step)));
            }
            (grads, loss.breakdown)
        };
        self.adam.step(&mut self.model.params, &grads.0, lr)?;
        self.step += 1;
        Ok(grads.1)
    }

    /// Samples a batch and takes one scheduled step.
    pub fn train_step(&mut self, windows: &[MotionSequence]) -> Result<(LossBreakdown, f64)> {
        let lr = self.cfg.lr_schedule(self.epoch_position());
        let batch = self.sampler.sample_batch(windows)?;
        Ok((self.step_on(&batch.tasks, lr)?, lr))
    }

    /// Writes model, optimizer state, statistics and `train_state.json`.
    pub fn save(&self, dir: &Path, epoch: usize) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save_with(dir, &self.adam.named_state(&self.model.params))?;
        if let Some(s) = &self.norm_stats {
            s.save(&dir.join(NORM_STATS_FILE))?;
        }
        let state = TrainState {
            epoch,
            step: self.step,
            adam_t: self.adam.t,
            config: self.cfg.clone(),
        };
        let p = dir.join(TRAIN_STATE_FILE);
        fs::write(&p, serde_json::to_string_pretty(&state)?).map_err(|e| Error::io(&p, e))
    }

    /// Runs all epochs, writing one JSON line per epoch (mean losses) to
    /// `log`. Checkpoints go to `out/epoch_NNNN` and `out/final`. On a
    /// non-finite loss the parameters are dumped to `out/nan_snapshot`.
    pub fn train(
        &mut self,
        windows: &[MotionSequence],
        out: Option<&Path>,
        log: &mut dyn Write,
    ) -> Result<Vec<LogLine>> {
        let mut lines = Vec::with_capacity(self.cfg.epochs);
        for epoch in 0..self.cfg.epochs {
            let mut acc = LossBreakdown::default();
            let mut lr = 0.0;
            for _ in 0..self.cfg.batches_per_epoch {
                let (l, r) = match self.train_step(windows) {
                    Err(Error::Numeric(msg)) => return Err(self.nan_abort(out, epoch, msg)),
                    other => other?,
                };
                lr = r;
                acc.l_pos_pred += l.l_pos_pred;
                acc.l_pos_rec += l.l_pos_rec;
                acc.l_quat_pred += l.l_quat_pred;
                acc.l_quat_rec += l.l_quat_rec;
                acc.l_tot += l.l_tot;
            }
            let n = self.cfg.batches_per_epoch as f64;
            let mean = LossBreakdown {
                l_pos_pred: acc.l_pos_pred / n,
                l_pos_rec: acc.l_pos_rec / n,
                l_quat_pred: acc.l_quat_pred / n,
                l_quat_rec: acc.l_quat_rec / n,
                l_tot: acc.l_tot / n,
            };
            let line = LogLine {
                epoch: epoch + 1,
                step: self.step,
                lr,
                loss: mean,
            };
            writeln!(log, "{}", serde_json::to_string(&line)?).map_err(|e| Error::io(Path::new("<log>"), e))?;
            lines.push(line);
            if let Some(dir) = out {
                let every = self.cfg.checkpoint_every;
                if every > 0 && (epoch + 1) % every == 0 {
                    self.save(&checkpoint_dir(dir, epoch + 1), epoch + 1)?;
                }
            }
        }
        if let Some(dir) = out {
            self.save(&dir.join(FINAL_DIR), self.cfg.epochs)?;
        }
        Ok(lines)
    }

    fn nan_abort(&self, out: Option<&Path>, epoch: usize, msg: String) -> Error {
        let Some(dir) = out else {
            return Error::Numeric(msg);
        };
        let snap = dir.join(NAN_SNAPSHOT_DIR);
        match self.save(&snap, epoch) {
            Ok(()) => Error::Numeric(format!("{msg}; snapshot in {}", snap.display())),
            Err(e) => Error::Numeric(format!("{msg}; snapshot failed: {e}")),
        }
    }
}

pub fn checkpoint_dir(out: &Path, epoch: usize) -> PathBuf {
    out.join(format!("epoch_{epoch:04}"))
}
