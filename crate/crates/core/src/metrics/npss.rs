//! Normalized power spectrum similarity.
//!
//! Per channel: squared-magnitude FFT over time (no window, DC kept),
//! normalized to unit sum, cumulative sum, L1 distance between the
//! cumulative spectra of prediction and target. The distances are averaged
//! over all (sequence, channel) pairs weighted by the target's total power.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// One sequence as `[frames][channels]`.
pub type Channels = Vec<Vec<f64>>;

fn check(pred: &[Channels], target: &[Channels]) -> Result<()> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Contract(format!(
            "npss needs matching non-empty sets ({} vs {} sequences)",
            pred.len(),
            target.len()
        )));
    }
    for (p, t) in pred.iter().zip(target) {
        if p.len() != t.len() {
            return Err(Error::Contract("prediction and target lengths differ".into()));
        }
        if t.len() < 2 {
            return Err(Error::Contract("npss needs at least two frames".into()));
        }
        let c = t[0].len();
        if p.iter().chain(t).any(|f| f.len() != c) {
            return Err(Error::Contract("channel counts differ between frames".into()));
        }
    }
    Ok(())
}

/// Power spectrum of each channel: `[channels][bins]`.
fn power(seq: &Channels, planner: &mut FftPlanner<f64>) -> Vec<Vec<f64>> {
    let n = seq.len();
    let fft = planner.plan_fft_forward(n);
    (0..seq[0].len())
        .map(|c| {
            let mut buf: Vec<Complex<f64>> = seq.iter().map(|f| Complex::new(f[c], 0.0)).collect();
            fft.process(&mut buf);
            buf.iter().map(|z| z.norm_sqr()).collect()
        })
        .collect()
}

fn cdf(p: &[f64]) -> (Vec<f64>, f64) {
    let total: f64 = p.iter().sum();
    let mut acc = 0.0;
    let out = p
        .iter()
        .map(|v| {
            if total > 0.0 {
                acc += v / total;
            }
            acc
        })
        .collect();
    (out, total)
}

/// Total-power-weighted earth mover's distance between power spectra.
pub fn npss(pred: &[Channels], target: &[Channels]) -> Result<f64> {
    check(pred, target)?;
    let mut planner = FftPlanner::new();
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        let (pp, tp) = (power(p, &mut planner), power(t, &mut planner));
        for (a, b) in pp.iter().zip(&tp) {
            let (ca, _) = cdf(a);
            let (cb, w) = cdf(b);
            let emd: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y).abs()).sum();
            num += w * emd;
            den += w;
        }
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(n^2) DFT version of [`npss`].
    pub(crate) fn brute_force(pred: &[Channels], target: &[Channels]) -> f64 {
        let spectrum = |seq: &Channels, c: usize| -> Vec<f64> {
            let n = seq.len();
            (0..n)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (t, f) in seq.iter().enumerate() {
                        let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        re += f[c] * ang.cos();
                        im += f[c] * ang.sin();
                    }
                    re * re + im * im
                })
                .collect()
        };
        let (mut num, mut den) = (0.0, 0.0);
        for (p, t) in pred.iter().zip(target) {
            for c in 0..t[0].len() {
                let (sp, st) = (spectrum(p, c), spectrum(t, c));
                let (tp, tt): (f64, f64) = (sp.iter().sum(), st.iter().sum());
                let (mut a, mut b, mut emd) = (0.0, 0.0, 0.0);
                for k in 0..sp.len() {
                    a += sp[k] / tp;
                    b += st[k] / tt;
                    emd += (a - b).abs();
                }
                num += tt * emd;
                den += tt;
            }
        }
        num / den
    }

    pub(crate) fn random_set(rng: &mut ChaCha8Rng, seqs: usize, frames: usize, channels: usize) -> Vec<Channels> {
        (0..seqs)
            .map(|_| {
                (0..frames)
                    .map(|_| (0..channels).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_set(&mut rng, 3, 10, 4);
        assert_eq!(npss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn matches_direct_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 2..=16 {
            let a = random_set(&mut rng, 2, n, 3);
            let b = random_set(&mut rng, 2, n, 3);
            assert!((npss(&a, &b).unwrap() - brute_force(&a, &b)).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_offset_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_set(&mut rng, 1, 12, 2);
        let p: Vec<Channels> = t
            .iter()
            .map(|s| s.iter().map(|f| f.iter().map(|v| v + 0.75).collect()).collect())
            .collect();
        let v = npss(&p, &t).unwrap();
        assert!(v > 0.0);
        assert!((v - brute_force(&p, &t)).abs() < 1e-9);
    }

    #[test]
    fn single_frame_is_rejected() {
        let a = vec![vec![vec![1.0]]];
        assert!(npss(&a, &a).is_err());
    }
}
