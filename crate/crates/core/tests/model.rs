use std::sync::Arc;

use dinterp::geometry::Skeleton;
use dinterp::model::{InputDelta, Model, ModelConfig, OutputDelta};
use dinterp::motion::{synth_motion, InbetweenTask, MotionSequence, SamplerConfig, SynthKind, TaskPattern};
use dinterp::par::Exec;
use dinterp::training::{TrainConfig, Trainer};

fn config(input: InputDelta, output: OutputDelta) -> ModelConfig {
    ModelConfig {
        input_delta: input,
        output_delta: output,
        max_frame_index: 32,
        ..ModelConfig::tiny(5)
    }
}

fn task(shift: [f64; 3]) -> InbetweenTask {
    let skel = Arc::new(Skeleton::biped5());
    let seq = synth_motion(SynthKind::SinusoidWalk, skel, 20, 2)
        .unwrap()
        .translated(shift);
    InbetweenTask::new(seq, TaskPattern::gap(6, 12, 2, None).unwrap()).unwrap()
}

fn max_root_gap(a: &MotionSequence, b: &MotionSequence, shift: [f64; 3]) -> f64 {
    let mut worst = 0.0f64;
    for (x, y) in a.frames().iter().zip(b.frames()) {
        for ((p, q), d) in x.root_pos.iter().zip(y.root_pos).zip(shift) {
            worst = worst.max((p + d - q).abs());
        }
        for (r, s) in x.rot.iter().zip(&y.rot) {
            for k in 0..6 {
                worst = worst.max((r.0[k] - s.0[k]).abs());
            }
        }
    }
    worst
}

#[test]
fn delta_modes_are_translation_equivariant() {
    let shift = [40.0, 0.0, -25.0];
    for out in [OutputDelta::Interp, OutputDelta::LastFrame] {
        let m = Model::new(config(InputDelta::LastFrame, out), Arc::new(Skeleton::biped5()), 3).unwrap();
        let a = m.predict(&[task([0.0; 3])], Exec::Sequential).unwrap();
        let b = m.predict(&[task(shift)], Exec::Sequential).unwrap();
        assert!(max_root_gap(&a[0], &b[0], shift) <= 1e-4, "{out:?}");
    }
}

#[test]
fn absolute_mode_is_not_translation_equivariant() {
    let shift = [40.0, 0.0, -25.0];
    let m = Model::new(
        config(InputDelta::None, OutputDelta::None),
        Arc::new(Skeleton::biped5()),
        3,
    )
    .unwrap();
    let a = m.predict(&[task([0.0; 3])], Exec::Sequential).unwrap();
    let b = m.predict(&[task(shift)], Exec::Sequential).unwrap();
    assert!(max_root_gap(&a[0], &b[0], shift) > 1e-2);
}

#[test]
fn repeated_steps_fit_a_fixed_batch() {
    let m = Model::new(
        config(InputDelta::LastFrame, OutputDelta::Interp),
        Arc::new(Skeleton::biped5()),
        1,
    )
    .unwrap();
    let cfg = TrainConfig {
        reconstruction_loss: false,
        ..TrainConfig::default()
    };
    let sampler = SamplerConfig {
        window_len: 20,
        n_in: vec![12],
        past_keys: 6,
        future_keys: 2,
        ..SamplerConfig::lafan1()
    };
    let mut t = Trainer::new(m, cfg, sampler, Exec::Parallel).unwrap();
    let tasks = [task([0.0; 3])];
    let first = t.evaluate_loss(&tasks).unwrap().l_tot;
    for _ in 0..60 {
        t.step_on(&tasks, 1e-3).unwrap();
    }
    let last = t.evaluate_loss(&tasks).unwrap().l_tot;
    assert!(last < 0.5 * first, "{first} -> {last}");
}

#[test]
fn sequential_and_parallel_predictions_agree() {
    let m = Model::new(
        config(InputDelta::LastFrame, OutputDelta::Interp),
        Arc::new(Skeleton::biped5()),
        5,
    )
    .unwrap();
    let tasks: Vec<_> = (0..3).map(|i| task([i as f64, 0.0, 0.0])).collect();
    let a = m.predict(&tasks, Exec::Sequential).unwrap();
    let b = m.predict(&tasks, Exec::Parallel).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.frames(), y.frames());
    }
}

#[test]
fn saved_model_reloads_bit_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let m = Model::new(
        config(InputDelta::LastFrame, OutputDelta::LastFrame),
        Arc::new(Skeleton::biped5()),
        8,
    )
    .unwrap();
    m.save(tmp.path()).unwrap();
    let back = Model::load(tmp.path()).unwrap();
    let t = [task([1.0, 2.0, 3.0])];
    assert_eq!(
        m.predict(&t, Exec::Sequential).unwrap()[0].frames(),
        back.predict(&t, Exec::Sequential).unwrap()[0].frames()
    );
}
