//! Benchmark metrics over the missing frames of in-betweening tasks.
//!
//! - [`l2q`]: mean L2 distance between flattened global joint quaternions.
//! - [`l2p`]: the same over standardized global joint positions.
//! - [`npss`]: power-spectrum similarity of the global quaternion channels.
//!
//! [`evaluate`] builds the fixed evaluation tasks for a set of gap lengths,
//! runs a model or baseline and collects a [`MetricsReport`].

pub mod npss;
mod report;

pub use npss::npss;
pub use report::{render_table, MetricsReport, MetricsRow};

use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineKind, PositionTask};
use crate::geometry::{make_sign_continuous, Quaternion, Vec3};
use crate::model::Model;
use crate::motion::{InbetweenTask, MotionSequence, NormStats, PositionSequence, TaskPattern};
use crate::par::Exec;
use crate::{Error, Result};

/// Global quaternions of one sequence, `[frames][joints]`.
pub type QuatTrack = Vec<Vec<Quaternion>>;
/// Global positions of one sequence, `[frames][joints]`.
pub type PosTrack = Vec<Vec<Vec3>>;

fn check_shapes<A, B>(pred: &[Vec<Vec<A>>], target: &[Vec<Vec<B>>]) -> Result<usize> {
    if pred.len() != target.len() {
        return Err(Error::shape("metric", &[pred.len()], &[target.len()]));
    }
    let mut frames = 0;
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(Error::shape("metric", &[p.len()], &[t.len()]));
        }
        for (a, b) in p.iter().zip(t) {
            if a.len() != b.len() {
                return Err(Error::shape("metric", &[a.len()], &[b.len()]));
            }
        }
        frames += t.len();
    }
    if frames == 0 {
        return Err(Error::Contract("metric over zero frames".into()));
    }
    Ok(frames)
}

/// Mean over all (sequence, frame) pairs of `‖q̂ − q‖₂` on the flattened
/// `J × 4` vector. Each predicted quaternion is first moved into its
/// target's hemisphere.
pub fn l2q(pred: &[QuatTrack], target: &[QuatTrack]) -> Result<f64> {
    let frames = check_shapes(pred, target)?;
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for (pf, tf) in p.iter().zip(t) {
            let sq: f64 = pf
                .iter()
                .zip(tf)
                .map(|(&a, &b)| {
                    let a = a.aligned_to(b).to_array();
                    let b = b.to_array();
                    (0..4).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()
                })
                .sum();
            sum += sq.sqrt();
        }
    }
    Ok(sum / frames as f64)
}

/// Mean over all (sequence, frame) pairs of the L2 distance between
/// standardized, flattened global positions.
pub fn l2p(pred: &[PosTrack], target: &[PosTrack], stats: &NormStats) -> Result<f64> {
    let frames = check_shapes(pred, target)?;
    let mut sum = 0.0;
    for (p, t) in pred.iter().zip(target) {
        for (pf, tf) in p.iter().zip(t) {
            let mut a: Vec<f64> = pf.iter().flatten().copied().collect();
            let mut b: Vec<f64> = tf.iter().flatten().copied().collect();
            stats.standardize(&mut a)?;
            stats.standardize(&mut b)?;
            sum += a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        }
    }
    Ok(sum / frames as f64)
}

/// NPSS input channels: targets made sign-continuous along time per joint,
/// predictions aligned to the target's hemisphere per joint-frame, each
/// frame flattened to `J × 4` values.
pub fn quaternion_channels(
    pred: &[QuatTrack],
    target: &[QuatTrack],
) -> Result<(Vec<npss::Channels>, Vec<npss::Channels>)> {
    check_shapes(pred, target)?;
    let mut ps = Vec::with_capacity(pred.len());
    let mut ts = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let joints = t.first().map_or(0, Vec::len);
        let mut t = t.clone();
        for j in 0..joints {
            let mut track: Vec<Quaternion> = t.iter().map(|f| f[j]).collect();
            make_sign_continuous(&mut track);
            for (f, q) in t.iter_mut().zip(track) {
                f[j] = q;
            }
        }
        let flat = |f: &[Quaternion]| f.iter().flat_map(|q| q.to_array()).collect::<Vec<f64>>();
        ps.push(
            p.iter()
                .zip(&t)
                .map(|(pf, tf)| {
                    pf.iter()
                        .zip(tf)
                        .flat_map(|(a, &b)| a.aligned_to(b).to_array())
                        .collect()
                })
                .collect(),
        );
        ts.push(t.iter().map(|f| flat(f)).collect());
    }
    Ok((ps, ts))
}

/// Global quaternions and positions of the given frames.
fn globals_at(seq: &MotionSequence, frames: &[usize]) -> Result<(QuatTrack, PosTrack)> {
    let mut q = Vec::with_capacity(frames.len());
    let mut p = Vec::with_capacity(frames.len());
    for &t in frames {
        let g = seq.global(t)?;
        q.push(g.rotations.iter().map(Quaternion::from_matrix).collect());
        p.push(g.positions);
    }
    Ok((q, p))
}

/// Gap layout used to build evaluation tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalProtocol {
    pub past_keys: usize,
    pub future_keys: usize,
    pub keyframe_stride: Option<usize>,
    pub lengths: Vec<usize>,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol::lafan1()
    }
}

impl EvalProtocol {
    /// Ten past keys, one target key, gaps 5/15/30.
    pub fn lafan1() -> Self {
        EvalProtocol {
            past_keys: 10,
            future_keys: 1,
            keyframe_stride: None,
            lengths: vec![5, 15, 30],
        }
    }

    /// One key on each side plus every 6th frame, gaps 5/15/30.
    pub fn anidance() -> Self {
        EvalProtocol {
            past_keys: 1,
            future_keys: 1,
            keyframe_stride: Some(6),
            lengths: vec![5, 15, 30],
        }
    }

    pub fn pattern(&self, n_in: usize) -> Result<TaskPattern> {
        TaskPattern::gap(self.past_keys, n_in, self.future_keys, self.keyframe_stride)
    }

    /// One task per window, taken from the window's first frames.
    pub fn tasks(&self, windows: &[MotionSequence], n_in: usize) -> Result<Vec<InbetweenTask>> {
        let pattern = self.pattern(n_in)?;
        windows
            .iter()
            .map(|w| InbetweenTask::new(w.slice(0, pattern.len())?, pattern.clone()))
            .collect()
    }

    pub fn position_tasks(&self, seqs: &[PositionSequence], n_in: usize) -> Result<Vec<PositionTask>> {
        let pattern = self.pattern(n_in)?;
        seqs.iter()
            .map(|s| PositionTask::new(s.slice(0, pattern.len())?, pattern.clone()))
            .collect()
    }
}

/// Something that fills in-betweening tasks.
#[derive(Clone, Copy, Debug)]
pub enum Predictor<'a> {
    Baseline(BaselineKind),
    Model(&'a Model),
}

impl Predictor<'_> {
    pub fn id(&self) -> String {
        match self {
            Predictor::Baseline(k) => k.name().to_string(),
            Predictor::Model(m) => format!("delta-{}:{}", m.cfg.input_delta, m.cfg.output_delta),
        }
    }

    pub fn predict(&self, tasks: &[InbetweenTask], exec: Exec) -> Result<Vec<MotionSequence>> {
        match self {
            Predictor::Baseline(k) => baselines::run_all(*k, tasks, exec),
            Predictor::Model(m) => m.predict(tasks, exec),
        }
    }
}

/// Metrics of predictions against the tasks' ground truth, over the missing
/// frames only.
pub fn score(tasks: &[InbetweenTask], preds: &[MotionSequence], stats: &NormStats, exec: Exec) -> Result<MetricsRow> {
    if tasks.len() != preds.len() || tasks.is_empty() {
        return Err(Error::Contract(format!(
            "{} predictions for {} tasks",
            preds.len(),
            tasks.len()
        )));
    }
    let idx: Vec<usize> = (0..tasks.len()).collect();
    let parts = exec
        .map(&idx, |&i| -> Result<_> {
            let miss = tasks[i].pattern.missing();
            let truth = globals_at(&tasks[i].sequence, miss)?;
            let pred = globals_at(&preds[i], miss)?;
            Ok((pred, truth))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (mut pq, mut pp, mut tq, mut tp) = (vec![], vec![], vec![], vec![]);
    for ((a, b), (c, d)) in parts {
        pq.push(a);
        pp.push(b);
        tq.push(c);
        tp.push(d);
    }
    let (pc, tc) = quaternion_channels(&pq, &tq)?;
    Ok(MetricsRow {
        length: tasks[0].pattern.missing().len(),
        l2q: Some(l2q(&pq, &tq)?),
        l2p: l2p(&pp, &tp, stats)?,
        npss: Some(npss(&pc, &tc)?),
    })
}

fn mean_rows(rows: &[MetricsRow]) -> MetricsRow {
    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&MetricsRow) -> Option<f64>| -> Option<f64> {
        rows.iter().map(f).sum::<Option<f64>>().map(|s| s / n)
    };
    MetricsRow {
        length: rows[0].length,
        l2q: avg(&|r| r.l2q),
        l2p: avg(&|r| Some(r.l2p)).unwrap_or(0.0),
        npss: avg(&|r| r.npss),
    }
}

/// Runs every predictor on the protocol's tasks and averages the metrics
/// over predictors (several seeds or checkpoints of one model).
pub fn evaluate(
    predictors: &[Predictor],
    windows: &[MotionSequence],
    protocol: &EvalProtocol,
    stats: &NormStats,
    exec: Exec,
) -> Result<MetricsReport> {
    let first = predictors
        .first()
        .ok_or_else(|| Error::Contract("nothing to evaluate".into()))?;
    if windows.is_empty() {
        return Err(Error::Contract("no evaluation windows".into()));
    }
    let mut rows = Vec::with_capacity(protocol.lengths.len());
    for &n in &protocol.lengths {
        let tasks = protocol.tasks(windows, n)?;
        let per: Vec<MetricsRow> = predictors
            .iter()
            .map(|p| score(&tasks, &p.predict(&tasks, exec)?, stats, exec))
            .collect::<Result<_>>()?;
        let mut row = mean_rows(&per);
        row.length = n;
        rows.push(row);
    }
    Ok(MetricsReport {
        dataset_id: String::new(),
        model_id: first.id(),
        seed_count: predictors.len(),
        rows,
    })
}

/// Position-only evaluation of a baseline: only L2P is reported.
pub fn evaluate_positions(
    kind: BaselineKind,
    seqs: &[PositionSequence],
    protocol: &EvalProtocol,
    stats: &NormStats,
    exec: Exec,
) -> Result<MetricsReport> {
    if seqs.is_empty() {
        return Err(Error::Contract("no evaluation sequences".into()));
    }
    let mut rows = Vec::with_capacity(protocol.lengths.len());
    for &n in &protocol.lengths {
        let tasks = protocol.position_tasks(seqs, n)?;
        let preds = exec
            .map(&tasks, |t| baselines::run_positions(kind, t))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let pick = |s: &PositionSequence, t: &PositionTask| -> PosTrack {
            t.pattern.missing().iter().map(|&i| s.frames[i].clone()).collect()
        };
        let pp: Vec<PosTrack> = preds.iter().zip(&tasks).map(|(s, t)| pick(s, t)).collect();
        let tp: Vec<PosTrack> = tasks.iter().map(|t| pick(&t.positions, t)).collect();
        rows.push(MetricsRow {
            length: n,
            l2q: None,
            l2p: l2p(&pp, &tp, stats)?,
            npss: None,
        });
    }
    Ok(MetricsReport {
        dataset_id: String::new(),
        model_id: kind.name().to_string(),
        seed_count: 1,
        rows,
    })
}
