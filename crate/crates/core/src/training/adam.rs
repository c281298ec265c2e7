use crate::autograd::Tensor;
use crate::model::ModelParams;
use crate::{Error, Result};

/// Adam with bias correction. Moments are stored per parameter in layout
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor<f32>>,
    v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(params: &ModelParams<f32>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let m: Vec<Tensor<f32>> = params.entries().iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
        Adam {
            beta1,
            beta2,
            eps,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    /// One update. `grads[i]` of `None` means a zero gradient.
    pub fn step(&mut self, params: &mut ModelParams<f32>, grads: &[Option<Tensor<f32>>], lr: f64) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} gradients / {} moments for {} parameters",
                grads.len(),
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.tensor_mut(i).data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k] as f64;
                let mk = b1 * m[k] as f64 + (1.0 - b1) * gk;
                let vk = b2 * v[k] as f64 + (1.0 - b2) * gk * gk;
                m[k] = mk as f32;
                v[k] = vk as f32;
                let upd = lr * (mk / c1) / ((vk / c2).sqrt() + self.eps);
                p[k] = (p[k] as f64 - upd) as f32;
            }
        }
        Ok(())
    }

    /// Moment tensors named `adam_m.<param>` / `adam_v.<param>`.
    pub fn named_state<'a>(&'a self, params: &'a ModelParams<f32>) -> Vec<(String, &'a Tensor<f32>)> {
        let names: Vec<&str> = params.names().collect();
        let mut out = Vec::with_capacity(2 * names.len());
        for (n, m) in names.iter().zip(&self.m) {
            out.push((format!("adam_m.{n}"), m));
        }
        for (n, v) in names.iter().zip(&self.v) {
            out.push((format!("adam_v.{n}"), v));
        }
        out
    }

    pub fn restore(&mut self, params: &ModelParams<f32>, t: u64, named: &[(String, Tensor<f32>)]) -> Result<()> {
        for (i, n) in params.names().enumerate() {
            for (prefix, store) in [("adam_m", &mut self.m), ("adam_v", &mut self.v)] {
                let key = format!("{prefix}.{n}");
                let t = named
                    .iter()
                    .find(|(k, _)| *k == key)
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks optimizer state `{key}`")))?;
                if t.1.shape() != store[i].shape() {
                    return Err(Error::Config(format!("optimizer state `{key}` has the wrong shape")));
                }
                store[i] = t.1.clone();
            }
        }
        self.t = t;
        Ok(())
    }
}
