//! Named model parameters.
//!
//! [`layout`] is the single source of truth for names, shapes and
//! initializers. With shared blocks both encoders read `block{l}.*`;
//! the unshared variant gives each encoder its own `key{l}.*` / `miss{l}.*`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::autograd::{Graph, Real, Tensor, Var};
use crate::{Error, Result};

pub const POS_EMBED_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Init {
    /// Uniform in `±1/sqrt(fan_in)`.
    Uniform(usize),
    Normal(f64),
    Const(f64),
}

/// Parameter-name prefix of block `level` for the key-frame (`missing =
/// false`) or missing-frame encoder.
pub fn block_prefix(cfg: &ModelConfig, level: usize, missing: bool) -> String {
    match (cfg.share_blocks, missing) {
        (true, _) => format!("block{level}"),
        (false, false) => format!("key{level}"),
        (false, true) => format!("miss{level}"),
    }
}

fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = cfg.width;
    let mut out = vec![(
        "pos_embed".to_string(),
        vec![cfg.max_frame_index, cfg.embed_dim],
        Init::Normal(POS_EMBED_STD),
    )];
    let inp = cfg.pose_channels() + cfg.embed_dim;
    out.push(("input.w".into(), vec![inp, d], Init::Uniform(inp)));
    out.push(("input.b".into(), vec![d], Init::Uniform(inp)));
    for l in 0..cfg.blocks {
        let mut prefixes = vec![block_prefix(cfg, l, false)];
        if !cfg.share_blocks {
            prefixes.push(block_prefix(cfg, l, true));
        }
        for p in prefixes {
            for w in ["wq", "wk", "wv", "wo"] {
                out.push((format!("{p}.{w}"), vec![d, d], Init::Uniform(d)));
            }
            out.push((format!("{p}.ln_gain"), vec![d], Init::Const(1.0)));
            out.push((format!("{p}.ln_bias"), vec![d], Init::Const(0.0)));
            for k in 0..cfg.encoder_mlp_layers {
                out.push((format!("{p}.mlp{k}.w"), vec![d, d], Init::Uniform(d)));
                out.push((format!("{p}.mlp{k}.b"), vec![d], Init::Uniform(d)));
            }
        }
    }
    for k in 0..cfg.decoder_mlp_layers {
        let o = if k + 1 == cfg.decoder_mlp_layers {
            cfg.output_channels()
        } else {
            d
        };
        out.push((format!("dec{k}.w"), vec![d, o], Init::Uniform(d)));
        out.push((format!("dec{k}.b"), vec![o], Init::Uniform(d)));
    }
    out
}

/// Parameter names in layout order.
pub fn param_names(cfg: &ModelConfig) -> Vec<String> {
    layout(cfg).into_iter().map(|(n, _, _)| n).collect()
}

#[derive(Clone, Debug)]
pub struct ModelParams<T: Real = f32> {
    entries: Vec<(String, Arc<Tensor<T>>)>,
    index: HashMap<String, usize>,
}

impl<T: Real> ModelParams<T> {
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let entries = layout(cfg)
            .into_iter()
            .map(|(name, shape, init)| {
                let t = match init {
                    Init::Uniform(fan) => {
                        let a = 1.0 / (fan as f64).sqrt();
                        Tensor::from_fn(&shape, |_| T::lit(rng.random_range(-a..a)))
                    }
                    Init::Normal(s) => {
                        let n = Normal::new(0.0, s).expect("finite std");
                        Tensor::from_fn(&shape, |_| T::lit(n.sample(&mut rng)))
                    }
                    Init::Const(c) => Tensor::full(&shape, T::lit(c)),
                };
                (name, Arc::new(t))
            })
            .collect();
        Ok(Self::from_entries(entries))
    }

    fn from_entries(entries: Vec<(String, Arc<Tensor<T>>)>) -> Self {
        let index = entries.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        ModelParams { entries, index }
    }

    /// Rebuilds parameters from named tensors, checking every expected
    /// name and shape. Extra names are ignored.
    pub fn from_named(cfg: &ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut map: HashMap<String, Tensor<T>> = named.into_iter().collect();
        let entries = layout(cfg)
            .into_iter()
            .map(|(name, shape, _)| {
                let t = map
                    .remove(&name)
                    .ok_or_else(|| Error::Config(format!("checkpoint lacks parameter `{name}`")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )));
                }
                Ok((name, Arc::new(t)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_entries(entries))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn entries(&self) -> &[(String, Arc<Tensor<T>>)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &*self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Mutable access for the optimizer; copies on write if a graph still
    /// holds the tensor.
    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.entries[i].1)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams::from_entries(
            self.entries
                .iter()
                .map(|(n, t)| (n.clone(), Arc::new(t.cast::<U>())))
                .collect(),
        )
    }

    /// Registers every tensor as a gradient-receiving leaf.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.param_shared(t.clone())))
            .collect();
        Bound { vars }
    }

    /// Registers every tensor as a constant (inference).
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.constant_shared(t.clone())))
            .collect();
        Bound { vars }
    }

    pub fn all_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.all_finite())
    }
}

/// Parameter variables of one graph, in layout order.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    pub fn new(vars: Vec<(String, Var)>) -> Self {
        Bound { vars }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Contract(format!("no parameter named `{name}`")))
    }

    pub fn vars(&self) -> &[(String, Var)] {
        &self.vars
    }
}
