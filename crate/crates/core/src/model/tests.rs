use super::net::{self, Dropout, Rows};
use super::*;
use crate::autograd::{Graph, Tensor, LAYERNORM_EPS};
use crate::baselines;
use crate::geometry::{self, Skeleton};
use crate::motion::{synth_motion, SynthKind, TaskPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cfg(width: usize, heads: usize, blocks: usize, joints: usize) -> ModelConfig {
    ModelConfig {
        width,
        heads,
        blocks,
        dropout: 0.0,
        joints,
        max_frame_index: 32,
        ..ModelConfig::default()
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn task(len_gap: usize, shift: [f64; 3], seed: u64) -> InbetweenTask {
    let skel = Arc::new(Skeleton::biped5());
    let s = synth_motion(SynthKind::SinusoidWalk, skel, 4 + len_gap + 1, seed).unwrap();
    InbetweenTask::new(s.translated(shift), TaskPattern::gap(4, len_gap, 1, None).unwrap()).unwrap()
}

fn matvec(x: &[f64], w: &Tensor<f64>) -> Vec<f64> {
    let (r, c) = (w.shape()[0], w.shape()[1]);
    (0..c)
        .map(|j| (0..r).map(|i| x[i] * w.data()[i * c + j]).sum())
        .collect()
}

#[test]
fn single_key_frame_matches_hand_evaluation() {
    let c = cfg(8, 2, 1, 1);
    let p = ModelParams::<f64>::init(&c, 5).unwrap();
    let x = random(&[1, 8], 1);
    let mut g = Graph::<f64>::new();
    let pv = p.bind_frozen(&mut g);
    let e0 = g.constant(x.clone());
    let out = net::keyframe_encoder(&mut g, &pv, &c, e0, Rows { batch: 1, n: 1 }, &mut Dropout::off()).unwrap();
    let got = g.value(out[0]).data().to_vec();

    // attention over a single token passes the value path through unchanged
    let w = |n: &str| p.get(n).unwrap();
    let v = matvec(x.data(), w("block0.wv"));
    let m = matvec(&v, w("block0.wo"));
    let r: Vec<f64> = m.iter().zip(x.data()).map(|(a, b)| a + b).collect();
    let mu = r.iter().sum::<f64>() / 8.0;
    let var = r.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / 8.0;
    let gain = w("block0.ln_gain").data();
    let bias = w("block0.ln_bias").data();
    let mut h: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, v)| ((v - mu) / (var + LAYERNORM_EPS).sqrt() * gain[i] + bias[i]).max(0.0))
        .collect();
    for k in 0..3 {
        let b = w(&format!("block0.mlp{k}.b")).data();
        h = matvec(&h, w(&format!("block0.mlp{k}.w")))
            .iter()
            .zip(b)
            .map(|(a, b)| a + b)
            .collect();
        if k < 2 {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    for (a, b) in got.iter().zip(&h) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn key_encoder_is_permutation_equivariant() {
    let c = cfg(8, 2, 2, 1);
    let p = ModelParams::<f64>::init(&c, 2).unwrap();
    let x = random(&[4, 8], 3);
    let perm = [2usize, 0, 3, 1];
    let xp = Tensor::from_fn(&[4, 8], |i| x.data()[perm[i / 8] * 8 + i % 8]);
    let run = |t: &Tensor<f64>| {
        let mut g = Graph::<f64>::new();
        let pv = p.bind_frozen(&mut g);
        let e0 = g.constant(t.clone());
        let out = net::keyframe_encoder(&mut g, &pv, &c, e0, Rows { batch: 1, n: 4 }, &mut Dropout::off()).unwrap();
        out.iter().map(|&v| g.value(v).clone()).collect::<Vec<_>>()
    };
    for (a, b) in run(&x).iter().zip(run(&xp)) {
        assert_eq!(a.shape(), &[4, 8]);
        for i in 0..32 {
            assert!((b.data()[i] - a.data()[perm[i / 8] * 8 + i % 8]).abs() < 1e-12);
        }
    }
}

#[test]
fn missing_frames_do_not_attend_to_each_other() {
    let c = cfg(8, 2, 2, 1);
    let p = ModelParams::<f64>::init(&c, 4).unwrap();
    let keys = random(&[3, 8], 5);
    let miss = random(&[4, 8], 6);
    let run = |m: &Tensor<f64>| {
        let mut g = Graph::<f64>::new();
        let pv = p.bind_frozen(&mut g);
        let k = g.constant(keys.clone());
        let kr = Rows { batch: 1, n: 3 };
        let levels = net::keyframe_encoder(&mut g, &pv, &c, k, kr, &mut Dropout::off()).unwrap();
        let m = g.constant(m.clone());
        let out = net::missing_frame_encoder(
            &mut g,
            &pv,
            &c,
            m,
            Rows { batch: 1, n: 4 },
            &levels,
            kr,
            &mut Dropout::off(),
        )
        .unwrap();
        g.value(out).clone()
    };
    let mut bumped = miss.clone();
    for v in &mut bumped.data_mut()[8..16] {
        *v += 0.7;
    }
    let (a, b) = (run(&miss), run(&bumped));
    for i in 0..32 {
        let changed = (a.data()[i] - b.data()[i]).abs() > 1e-12;
        assert_eq!(changed, i / 8 == 1, "entry {i}");
    }
}

fn zero_residual_positions(mode: OutputDelta) -> (Vec<f64>, MotionSequence) {
    let mut c = cfg(16, 2, 1, 5);
    c.output_delta = mode;
    let t = task(6, [0.0; 3], 8);
    let batch = prepare(&c, std::slice::from_ref(&t), false, Exec::Sequential).unwrap();
    let mut g = Graph::<f64>::new();
    let dy = g.constant(Tensor::zeros(&[6, c.output_channels()]));
    let dx = g.constant(Tensor::zeros(&[5, c.output_channels()]));
    let (y, _) = net::compose_output(&mut g, &c, &t.sequence.skeleton().clone(), dy, dx, &batch).unwrap();
    let reference = match mode {
        OutputDelta::Interp => baselines::slerp_interpolate(&t).unwrap(),
        _ => baselines::zero_velocity(&t).unwrap(),
    };
    (g.value(y.pos).data().to_vec(), reference)
}

#[test]
fn zero_residual_reproduces_baselines() {
    for mode in [OutputDelta::Interp, OutputDelta::LastFrame] {
        let (pos, reference) = zero_residual_positions(mode);
        for (i, t) in (4..10).enumerate() {
            let g = reference.global(t).unwrap();
            for (j, p) in g.positions.iter().enumerate() {
                for k in 0..3 {
                    assert!((pos[(i * 5 + j) * 3 + k] - p[k]).abs() < 1e-12, "{mode}");
                }
            }
        }
    }
}

fn predicted_globals(model: &Model, t: &InbetweenTask) -> Vec<geometry::Vec3> {
    let out = model.predict(std::slice::from_ref(t), Exec::Sequential).unwrap();
    t.pattern
        .missing()
        .iter()
        .flat_map(|&f| out[0].global(f).unwrap().positions)
        .collect()
}

#[test]
fn delta_modes_are_translation_equivariant() {
    let skel = Arc::new(Skeleton::biped5());
    for out_mode in [OutputDelta::Interp, OutputDelta::LastFrame] {
        let mut c = ModelConfig::tiny(5);
        c.output_delta = out_mode;
        let model = Model::new(c, skel.clone(), 1).unwrap();
        let shift = [13.0, 0.5, -21.0];
        let a = predicted_globals(&model, &task(7, [0.0; 3], 2));
        let b = predicted_globals(&model, &task(7, shift, 2));
        for (p, q) in a.iter().zip(&b) {
            for k in 0..3 {
                assert!((q[k] - p[k] - shift[k]).abs() <= 1e-4, "{out_mode}: {p:?} {q:?}");
            }
        }
    }
}

#[test]
fn output_rotations_are_orthonormal() {
    let c = ModelConfig::tiny(5);
    let model = Model::new(c.clone(), Arc::new(Skeleton::biped5()), 3).unwrap();
    let t = task(5, [0.0; 3], 1);
    let batch = prepare(&c, &[t], false, Exec::Sequential).unwrap();
    let mut g = Graph::<f32>::new();
    let pv = model.params.bind_frozen(&mut g);
    let out = net::forward(&mut g, &pv, &c, &model.skeleton, &batch, &mut Dropout::off()).unwrap();
    for m in g.value(out.pred.rot).to_f64_vec().chunks(9) {
        let r = geometry::RotationMatrix::from_flat(m);
        assert!(r.orthonormality_error() < 1e-4);
        assert!((r.det() - 1.0).abs() < 1e-4);
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let model = Model::new(ModelConfig::tiny(5), Arc::new(Skeleton::biped5()), 4).unwrap();
    let extra = Tensor::<f32>::full(&[2], 3.0);
    model.save_with(dir.path(), &[("adam_m.x".into(), &extra)]).unwrap();
    let (back, extras) = Model::load_with_extras(dir.path()).unwrap();
    assert_eq!(extras.len(), 1);
    assert_eq!(extras[0].1, extra);
    let t = task(5, [0.0; 3], 9);
    assert_eq!(predicted_globals(&model, &t), predicted_globals(&back, &t));
}

#[test]
fn predict_groups_mixed_patterns_in_order() {
    let model = Model::new(ModelConfig::tiny(5), Arc::new(Skeleton::biped5()), 4).unwrap();
    let tasks = vec![task(5, [0.0; 3], 1), task(8, [0.0; 3], 2), task(5, [0.0; 3], 3)];
    let out = model.predict(&tasks, Exec::Parallel).unwrap();
    for (t, o) in tasks.iter().zip(&out) {
        assert_eq!(t.sequence.len(), o.len());
        for &k in t.pattern.keys() {
            assert_eq!(t.sequence.frames()[k], o.frames()[k]);
        }
    }
}
