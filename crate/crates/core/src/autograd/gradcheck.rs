//! Central finite-difference gradient checking.
//!
//! The probe treats the graph as a black box: each input entry is nudged by
//! `±step`, the whole function is re-evaluated, and the slope is compared
//! with the gradient produced by [`Graph::backward`]. Non-scalar outputs are
//! contracted with fixed pseudo-random weights so that constraints such as
//! "softmax rows sum to one" do not hide errors.

use super::{Graph, Tensor, Var};
use crate::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Relative error per input, `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`
    /// over the probed entries.
    pub rel_err: Vec<f64>,
    pub probed: usize,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.rel_err.iter().cloned().fold(0.0, f64::max)
    }
}

fn weights(n: usize) -> Tensor<f64> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    Tensor::from_fn(&[n], |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        0.5 + (state % 10_000) as f64 / 10_000.0
    })
}

fn scalar_loss<F>(inputs: &[Tensor<f64>], f: &F, track: bool) -> Result<(Graph<f64>, Vec<Var>, Var)>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| {
            if track {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
        .collect();
    let out = f(&mut g, &vars)?;
    let n = g.value(out).numel();
    let flat = g.reshape(out, &[n])?;
    let w = g.constant(weights(n));
    let prod = g.mul(flat, w)?;
    let loss = g.sum(prod);
    Ok((g, vars, loss))
}

/// Checks every entry of every input.
pub fn check<F>(inputs: &[Tensor<f64>], step: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    check_sampled(inputs, step, usize::MAX, f)
}

/// Checks at most `per_input` evenly strided entries of each input.
pub fn check_sampled<F>(inputs: &[Tensor<f64>], step: f64, per_input: usize, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let (mut g, vars, loss) = scalar_loss(inputs, &f, true)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect();

    let eval = |probe: &[Tensor<f64>]| -> Result<f64> {
        let (g, _, loss) = scalar_loss(probe, &f, false)?;
        Ok(g.value(loss).item())
    };

    let mut rel_err = Vec::with_capacity(inputs.len());
    let mut probed = 0;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (ii, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let stride = if per_input >= n { 1 } else { n.div_ceil(per_input) };
        let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
        for j in (0..n).step_by(stride) {
            let orig = input.data()[j];
            work[ii].data_mut()[j] = orig + step;
            let up = eval(&work)?;
            work[ii].data_mut()[j] = orig - step;
            let down = eval(&work)?;
            work[ii].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic[ii].data()[j];
            diff2 += (a - numeric).powi(2);
            a2 += a * a;
            n2 += numeric * numeric;
            probed += 1;
        }
        let denom = a2.sqrt().max(n2.sqrt());
        rel_err.push(if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom });
    }
    Ok(GradCheckReport { rel_err, probed })
}

fn filled(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut state = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
    Tensor::from_fn(shape, |_| {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        lo + (hi - lo) * ((state >> 11) as f64 / (1u64 << 53) as f64)
    })
}

/// Values in `±[0.2, 1.0]`, kept clear of the kinks of ReLU and |x|.
fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mag = filled(shape, seed, 0.2, 1.0);
    let sign = filled(shape, seed + 1, -1.0, 1.0);
    Tensor::from_fn(shape, |i| mag.data()[i].copysign(sign.data()[i]))
}

fn rotation(axis: [f64; 3], angle: f64) -> [f64; 9] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let [x, y, z] = axis.map(|a| a / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        t * x * x + c,
        t * x * y - s * z,
        t * x * z + s * y,
        t * x * y + s * z,
        t * y * y + c,
        t * y * z - s * x,
        t * x * z - s * y,
        t * y * z + s * x,
        t * z * z + c,
    ]
}

type Case = (
    &'static str,
    Vec<Tensor<f64>>,
    fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
);

/// Finite-difference check of every graph operation in `f64`, including the
/// broadcast forms of `mul` and `matmul`, softmax along each axis and all
/// four branches of `matrix_to_quat`. Returns the worst relative error per
/// case.
pub fn op_suite() -> Result<Vec<(&'static str, f64)>> {
    let near_pi = |axis: [f64; 3]| rotation(axis, std::f64::consts::PI - 0.3);
    let mats: Vec<f64> = [
        rotation([0.3, -0.5, 0.8], 0.4),
        near_pi([1.0, 0.1, 0.05]),
        near_pi([0.1, 1.0, -0.05]),
        near_pi([0.05, -0.1, 1.0]),
    ]
    .concat();
    let mats = Tensor::new(vec![4, 3, 3], mats)?;

    let cases: Vec<Case> = vec![
        (
            "add",
            vec![filled(&[3, 4], 1, -1.0, 1.0), filled(&[3, 4], 2, -1.0, 1.0)],
            |g, v| g.add(v[0], v[1]),
        ),
        (
            "add_broadcast",
            vec![filled(&[2, 3, 4], 3, -1.0, 1.0), filled(&[4], 4, -1.0, 1.0)],
            |g, v| g.add(v[0], v[1]),
        ),
        (
            "sub",
            vec![filled(&[2, 5], 5, -1.0, 1.0), filled(&[5], 6, -1.0, 1.0)],
            |g, v| g.sub(v[0], v[1]),
        ),
        (
            "mul",
            vec![filled(&[3, 4], 7, -1.0, 1.0), filled(&[3, 4], 8, -1.0, 1.0)],
            |g, v| g.mul(v[0], v[1]),
        ),
        (
            "mul_broadcast",
            vec![filled(&[2, 3, 4], 9, -1.0, 1.0), filled(&[3, 4], 10, -1.0, 1.0)],
            |g, v| g.mul(v[0], v[1]),
        ),
        ("scalar_mul", vec![filled(&[6], 11, -1.0, 1.0)], |g, v| {
            Ok(g.scalar_mul(v[0], -1.7))
        }),
        ("relu", vec![away_from_zero(&[3, 5], 12)], |g, v| Ok(g.relu(v[0]))),
        (
            "matmul",
            vec![filled(&[3, 4], 14, -1.0, 1.0), filled(&[4, 2], 15, -1.0, 1.0)],
            |g, v| g.matmul(v[0], v[1]),
        ),
        (
            "matmul_batched",
            vec![filled(&[2, 3, 4], 16, -1.0, 1.0), filled(&[2, 4, 5], 17, -1.0, 1.0)],
            |g, v| g.matmul(v[0], v[1]),
        ),
        (
            "matmul_broadcast",
            vec![filled(&[2, 3, 4], 18, -1.0, 1.0), filled(&[4, 5], 19, -1.0, 1.0)],
            |g, v| g.matmul(v[0], v[1]),
        ),
        (
            "transpose",
            vec![filled(&[2, 3, 4], 20, -1.0, 1.0), filled(&[2, 4, 3], 21, -1.0, 1.0)],
            |g, v| {
                let t = g.transpose(v[0])?;
                g.mul(t, v[1])
            },
        ),
        (
            "reshape",
            vec![filled(&[2, 6], 22, -1.0, 1.0), filled(&[3, 4], 23, -1.0, 1.0)],
            |g, v| {
                let r = g.reshape(v[0], &[3, 4])?;
                g.mul(r, v[1])
            },
        ),
        (
            "concat",
            vec![filled(&[2, 3], 24, -1.0, 1.0), filled(&[2, 2], 25, -1.0, 1.0)],
            |g, v| g.concat(&[v[0], v[1]], 1),
        ),
        ("slice", vec![filled(&[4, 5], 26, -1.0, 1.0)], |g, v| {
            g.slice(v[0], 1, 1, 3)
        }),
        ("gather_rows", vec![filled(&[5, 3], 27, -1.0, 1.0)], |g, v| {
            g.gather_rows(v[0], &[4, 0, 4, 2])
        }),
        ("softmax_last", vec![filled(&[2, 3, 4], 28, -2.0, 2.0)], |g, v| {
            g.softmax(v[0], 2)
        }),
        ("softmax_middle", vec![filled(&[2, 3, 4], 29, -2.0, 2.0)], |g, v| {
            g.softmax(v[0], 1)
        }),
        ("softmax_first", vec![filled(&[2, 3, 4], 30, -2.0, 2.0)], |g, v| {
            g.softmax(v[0], 0)
        }),
        (
            "layernorm",
            vec![
                filled(&[3, 6], 31, -2.0, 2.0),
                filled(&[6], 32, 0.5, 1.5),
                filled(&[6], 33, -0.5, 0.5),
            ],
            |g, v| g.layernorm(v[0], v[1], v[2], super::LAYERNORM_EPS),
        ),
        ("mean", vec![filled(&[3, 4], 34, -1.0, 1.0)], |g, v| Ok(g.mean(v[0]))),
        ("sum", vec![filled(&[3, 4], 35, -1.0, 1.0)], |g, v| Ok(g.sum(v[0]))),
        ("l1_norm_lastaxis", vec![away_from_zero(&[3, 4], 36)], |g, v| {
            g.l1_norm_lastaxis(v[0])
        }),
        ("normalize_lastaxis", vec![filled(&[4, 3], 38, 0.2, 1.0)], |g, v| {
            g.normalize_lastaxis(v[0], 1e-8)
        }),
        (
            "cross_lastaxis",
            vec![filled(&[4, 3], 39, -1.0, 1.0), filled(&[4, 3], 40, -1.0, 1.0)],
            |g, v| g.cross_lastaxis(v[0], v[1]),
        ),
        ("matrix_to_quat", vec![mats], |g, v| g.matrix_to_quat(v[0])),
    ];
    cases
        .into_iter()
        .map(|(name, inputs, f)| Ok((name, check(&inputs, 1e-6, f)?.max_rel_err())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::graph::quat_branch;

    #[test]
    fn every_op_matches_finite_differences() {
        for (name, err) in op_suite().unwrap() {
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn suite_covers_all_quaternion_branches() {
        let near_pi = |axis| rotation(axis, std::f64::consts::PI - 0.3);
        let b: Vec<u8> = [
            rotation([0.3, -0.5, 0.8], 0.4),
            near_pi([1.0, 0.1, 0.05]),
            near_pi([0.1, 1.0, -0.05]),
            near_pi([0.05, -0.1, 1.0]),
        ]
        .iter()
        .map(|m| quat_branch(m))
        .collect();
        assert_eq!(b, vec![0, 1, 2, 3]);
    }

    #[test]
    fn a_wrong_gradient_is_caught() {
        let x = filled(&[4], 1, -1.0, 1.0);
        // x * stop_gradient(x) has half the true slope of x²
        let r = check(&[x], 1e-6, |g, v| {
            let c = g.constant(g.value(v[0]).clone());
            g.mul(v[0], c)
        })
        .unwrap();
        assert!(r.max_rel_err() > 0.1);
    }
}
