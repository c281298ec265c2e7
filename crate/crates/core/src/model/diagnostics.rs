//! Self-checks of the network used by tests and the acceptance runner.

use std::sync::Arc;

use super::net::{self, count_attention_scores, Dropout, Rows};
use super::{prepare, Bound, ModelConfig, ModelParams, PreparedBatch};
use crate::autograd::{gradcheck, Graph, Real, Tensor, Var};
use crate::geometry::Skeleton;
use crate::motion::{synth_motion, InbetweenTask, SynthKind, TaskPattern};
use crate::par::Exec;
use crate::Result;

fn forward_flat<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    c: &ModelConfig,
    skel: &Skeleton,
    b: &PreparedBatch,
) -> Result<Var> {
    let out = net::forward(g, pv, c, skel, b, &mut Dropout::off())?;
    let a = g.reshape(out.pred.pos, &[g.value(out.pred.pos).numel()])?;
    let r = g.reshape(out.rec.rot, &[g.value(out.rec.rot).numel()])?;
    g.concat(&[a, r], 0)
}

/// Central-difference check of a small two-level model in `f64`, through
/// attention, MLPs, decoder and forward kinematics. Returns the relative
/// error per parameter tensor.
pub fn end_to_end_gradcheck() -> Result<Vec<(String, f64)>> {
    let skel = Skeleton::chain(3);
    let c = ModelConfig {
        width: 16,
        heads: 2,
        blocks: 2,
        dropout: 0.0,
        joints: 3,
        max_frame_index: 8,
        ..ModelConfig::default()
    };
    let seq = synth_motion(SynthKind::FigureEight, Arc::new(skel.clone()), 6, 3)?;
    let t = InbetweenTask::new(seq, TaskPattern::gap(2, 3, 1, None)?)?;
    let batch = prepare(&c, &[t], false, Exec::Sequential)?;
    let p = ModelParams::<f64>::init(&c, 11)?;
    let names: Vec<String> = p.names().map(String::from).collect();
    // sharpen attention so query/key gradients stand well above round-off;
    // the 1e-4 step stays clear of ReLU kinks at this point
    let inputs: Vec<Tensor<f64>> = p
        .entries()
        .iter()
        .map(|(n, t)| {
            if n.ends_with(".wq") || n.ends_with(".wk") {
                t.map(|x| 4.0 * x)
            } else {
                (**t).clone()
            }
        })
        .collect();
    let report = gradcheck::check_sampled(&inputs, 1e-4, 6, |g, vars| {
        let pv = Bound::new(names.iter().cloned().zip(vars.iter().copied()).collect());
        forward_flat(g, &pv, &c, &skel, &batch)
    })?;
    Ok(names.into_iter().zip(report.rel_err).collect())
}

/// Attention score entries per level for `n_keys` key-frames and `n_missing`
/// missing frames: `(split encoders, one self-attention over all frames)`.
/// Both are counted while running the real attention code.
pub fn measured_attention_scores(n_keys: usize, n_missing: usize) -> Result<(u64, u64)> {
    let skel = Arc::new(Skeleton::chain(2));
    let cfg = ModelConfig {
        blocks: 1,
        max_frame_index: n_keys + n_missing,
        ..ModelConfig::tiny(2)
    };
    let seq = synth_motion(SynthKind::SinusoidWalk, skel.clone(), n_keys + n_missing, 0)?;
    let pattern = TaskPattern::gap(n_keys - 1, n_missing, 1, None)?;
    let batch = prepare(&cfg, &[InbetweenTask::new(seq, pattern)?], false, Exec::Sequential)?;
    let params = ModelParams::<f32>::init(&cfg, 0)?;

    let mut g = Graph::<f32>::new();
    let pv = params.bind_frozen(&mut g);
    let (out, split) = count_attention_scores(|| net::forward(&mut g, &pv, &cfg, &skel, &batch, &mut Dropout::off()));
    out?;

    let mut g = Graph::<f32>::new();
    let pv = params.bind_frozen(&mut g);
    let (e0k, e0m) = net::build_inputs(&mut g, &pv, &cfg, &batch)?;
    let all = g.concat(&[e0k, e0m], 0)?;
    let rows = Rows {
        batch: 1,
        n: n_keys + n_missing,
    };
    let (out, joint) =
        count_attention_scores(|| net::keyframe_encoder(&mut g, &pv, &cfg, all, rows, &mut Dropout::off()));
    out?;
    Ok((split, joint))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::attention_scores;

    #[test]
    fn full_forward_passes_gradient_check() {
        for (n, e) in end_to_end_gradcheck().unwrap() {
            assert!(e < 1e-3, "{n}: {e}");
        }
    }

    #[test]
    fn measured_counts_match_formula() {
        let (s, j) = measured_attention_scores(11, 30).unwrap();
        assert_eq!((s, j), (451, 1681));
        let (a, b) = attention_scores(11, 30);
        assert_eq!((s, j), (a as u64, b as u64));
        let (s, j) = measured_attention_scores(3, 7).unwrap();
        assert_eq!((s, j), (3 * 3 + 7 * 3, 100));
    }
}
