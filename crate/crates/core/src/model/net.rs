//! The network as graph operations.
//!
//! Activations are kept as `[B * n, d]` matrices and reshaped to
//! `[B, n, d]` only inside attention.

use std::cell::Cell;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{block_prefix, Bound};
use super::{ModelConfig, PreparedBatch};
use crate::autograd::{Graph, Real, Tensor, Var, LAYERNORM_EPS};
use crate::geometry::{diff, Skeleton};
use crate::Result;

/// Training-time dropout. Inactive without an RNG or with `p == 0`.
pub struct Dropout<'a> {
    pub p: f64,
    pub rng: Option<&'a mut ChaCha8Rng>,
}

impl Dropout<'_> {
    pub fn off() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    fn apply<T: Real>(&mut self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let p = self.p;
        let Some(rng) = self.rng.as_deref_mut().filter(|_| p > 0.0) else {
            return Ok(x);
        };
        let keep = T::lit(1.0 / (1.0 - p));
        let shape = g.shape(x).to_vec();
        let mask = Tensor::from_fn(&shape, |_| if rng.random::<f64>() < p { T::zero() } else { keep });
        let m = g.constant(mask);
        g.mul(x, m)
    }
}

thread_local! {
    static SCORE_ENTRIES: Cell<u64> = const { Cell::new(0) };
}

/// Runs `f` and returns the attention score entries it computed on this
/// thread, counted for one window and one head.
pub fn count_attention_scores<R>(f: impl FnOnce() -> R) -> (R, u64) {
    let outer = SCORE_ENTRIES.with(|c| c.replace(0));
    let r = f();
    let n = SCORE_ENTRIES.with(|c| c.replace(outer));
    SCORE_ENTRIES.with(|c| c.set(outer + n));
    (r, n)
}

/// Batch geometry: `batch` windows with `n` rows each.
#[derive(Clone, Copy, Debug)]
pub struct Rows {
    pub batch: usize,
    pub n: usize,
}

fn linear<T: Real>(g: &mut Graph<T>, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let y = g.matmul(x, w)?;
    match b {
        Some(b) => g.add(y, b),
        None => Ok(y),
    }
}

/// Multi-head attention; queries from `q_in`, keys and values from `kv_in`.
fn attention<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    prefix: &str,
    q_in: Var,
    q_rows: Rows,
    kv_in: Var,
    kv_rows: Rows,
) -> Result<Var> {
    let (d, h) = (cfg.width, cfg.heads);
    let dh = d / h;
    let b = q_rows.batch;
    let q = linear(g, q_in, pv.get(&format!("{prefix}.wq"))?, None)?;
    let k = linear(g, kv_in, pv.get(&format!("{prefix}.wk"))?, None)?;
    let v = linear(g, kv_in, pv.get(&format!("{prefix}.wv"))?, None)?;
    let q = g.reshape(q, &[b, q_rows.n, d])?;
    let k = g.reshape(k, &[b, kv_rows.n, d])?;
    let v = g.reshape(v, &[b, kv_rows.n, d])?;
    SCORE_ENTRIES.with(|c| c.set(c.get() + (q_rows.n * kv_rows.n) as u64));
    let scale = 1.0 / (d as f64).sqrt();
    let mut heads = Vec::with_capacity(h);
    for i in 0..h {
        let qh = g.slice(q, 2, i * dh, dh)?;
        let kh = g.slice(k, 2, i * dh, dh)?;
        let vh = g.slice(v, 2, i * dh, dh)?;
        let kt = g.transpose(kh)?;
        let s = g.matmul(qh, kt)?;
        let s = g.scalar_mul(s, scale);
        let a = g.softmax(s, 2)?;
        heads.push(g.matmul(a, vh)?);
    }
    let cat = g.concat(&heads, 2)?;
    let cat = g.reshape(cat, &[b * q_rows.n, d])?;
    linear(g, cat, pv.get(&format!("{prefix}.wo"))?, None)
}

/// One residual block: attention, `relu(layernorm(mha + x))`, MLP.
#[allow(clippy::too_many_arguments)]
fn block<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    prefix: &str,
    x: Var,
    x_rows: Rows,
    kv: Var,
    kv_rows: Rows,
    drop: &mut Dropout,
) -> Result<Var> {
    let m = attention(g, pv, cfg, prefix, x, x_rows, kv, kv_rows)?;
    let m = drop.apply(g, m)?;
    let r = g.add(m, x)?;
    let n = g.layernorm(
        r,
        pv.get(&format!("{prefix}.ln_gain"))?,
        pv.get(&format!("{prefix}.ln_bias"))?,
        LAYERNORM_EPS,
    )?;
    let mut hcur = g.relu(n);
    for k in 0..cfg.encoder_mlp_layers {
        let w = pv.get(&format!("{prefix}.mlp{k}.w"))?;
        let bias = pv.get(&format!("{prefix}.mlp{k}.b"))?;
        hcur = linear(g, hcur, w, Some(bias))?;
        if k + 1 < cfg.encoder_mlp_layers {
            hcur = g.relu(hcur);
            hcur = drop.apply(g, hcur)?;
        }
    }
    Ok(hcur)
}

/// Projects key-frame features and zero templates, each concatenated with
/// the positional embedding of its frame. Returns `(e0_keys, e0_missing)`.
pub fn build_inputs<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    batch: &PreparedBatch,
) -> Result<(Var, Var)> {
    let b = batch.batch;
    let c = cfg.pose_channels();
    let table = pv.get("pos_embed")?;
    let w = pv.get("input.w")?;
    let bias = pv.get("input.b")?;
    let project = |g: &mut Graph<T>, frames: &[usize], feats: Tensor<T>| -> Result<Var> {
        let idx: Vec<usize> = (0..b).flat_map(|_| frames.iter().copied()).collect();
        let emb = g.gather_rows(table, &idx)?;
        let x = g.constant(feats);
        let x = g.concat(&[x, emb], 1)?;
        linear(g, x, w, Some(bias))
    };
    let keys = batch.pattern.keys();
    let missing = batch.pattern.missing();
    let kf = Tensor::from_f64(&[b * keys.len(), c], &batch.key_features)?;
    let e0k = project(g, keys, kf)?;
    let e0m = project(g, missing, Tensor::zeros(&[b * missing.len(), c]))?;
    Ok((e0k, e0m))
}

/// Self-attention over key-frames; returns the outputs of all levels.
pub fn keyframe_encoder<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    e0: Var,
    rows: Rows,
    drop: &mut Dropout,
) -> Result<Vec<Var>> {
    let mut levels = Vec::with_capacity(cfg.blocks);
    let mut e = e0;
    for l in 0..cfg.blocks {
        let p = block_prefix(cfg, l, false);
        e = block(g, pv, cfg, &p, e, rows, e, rows, drop)?;
        levels.push(e);
    }
    Ok(levels)
}

/// Cross-attention from missing-frame templates to the key-frame encoding
/// of the same level. Missing frames never attend to each other.
pub fn missing_frame_encoder<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    e0: Var,
    rows: Rows,
    key_levels: &[Var],
    key_rows: Rows,
    drop: &mut Dropout,
) -> Result<Var> {
    let mut e = e0;
    for (l, &k) in key_levels.iter().enumerate() {
        let p = block_prefix(cfg, l, true);
        e = block(g, pv, cfg, &p, e, rows, k, key_rows, drop)?;
    }
    Ok(e)
}

/// Shared MLP decoder: `[rows, d] -> [rows, 3 + 6J]`.
pub fn decode<T: Real>(g: &mut Graph<T>, pv: &Bound, cfg: &ModelConfig, e: Var) -> Result<Var> {
    let mut hcur = e;
    for k in 0..cfg.decoder_mlp_layers {
        hcur = linear(
            g,
            hcur,
            pv.get(&format!("dec{k}.w"))?,
            Some(pv.get(&format!("dec{k}.b"))?),
        )?;
        if k + 1 < cfg.decoder_mlp_layers {
            hcur = g.relu(hcur);
        }
    }
    Ok(hcur)
}

/// Baseline plus residual, then forward kinematics.
#[derive(Clone, Copy, Debug)]
pub struct Stream {
    /// `[rows, 3 + 6J]` local root position and ortho6D rotations.
    pub local: Var,
    /// `[rows, J, 3]` global joint positions.
    pub pos: Var,
    /// `[rows, J, 3, 3]` global joint rotations.
    pub rot: Var,
}

fn compose_stream<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    skel: &Skeleton,
    delta: Var,
    base: &[f64],
) -> Result<Stream> {
    let rows = g.shape(delta)[0];
    let base = g.constant(Tensor::from_f64(&[rows, cfg.output_channels()], base)?);
    let local = g.add(delta, base)?;
    let root = g.slice(local, 1, 0, 3)?;
    let r6 = g.slice(local, 1, 3, 6 * cfg.joints)?;
    let r6 = g.reshape(r6, &[rows, cfg.joints, 6])?;
    let (pos, rot) = diff::fk(g, skel, root, r6)?;
    Ok(Stream { local, pos, rot })
}

/// Adds the per-mode baselines to the decoded residuals and runs FK.
/// Returns `(prediction, reconstruction)`.
pub fn compose_output<T: Real>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    skel: &Skeleton,
    delta_y: Var,
    delta_x: Var,
    batch: &PreparedBatch,
) -> Result<(Stream, Stream)> {
    let y = compose_stream(g, cfg, skel, delta_y, &batch.base_missing)?;
    let x = compose_stream(g, cfg, skel, delta_x, &batch.base_keys)?;
    Ok((y, x))
}

/// Residuals and composed outputs of a full forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Forward {
    pub delta_y: Var,
    pub delta_x: Var,
    pub pred: Stream,
    pub rec: Stream,
}

pub fn forward<T: Real>(
    g: &mut Graph<T>,
    pv: &Bound,
    cfg: &ModelConfig,
    skel: &Skeleton,
    batch: &PreparedBatch,
    drop: &mut Dropout,
) -> Result<Forward> {
    let kr = Rows {
        batch: batch.batch,
        n: batch.n_keys(),
    };
    let mr = Rows {
        batch: batch.batch,
        n: batch.n_missing(),
    };
    let (e0k, e0m) = build_inputs(g, pv, cfg, batch)?;
    let levels = keyframe_encoder(g, pv, cfg, e0k, kr, drop)?;
    let em = missing_frame_encoder(g, pv, cfg, e0m, mr, &levels, kr, drop)?;
    let ek = *levels.last().expect("at least one block");
    let delta_y = decode(g, pv, cfg, em)?;
    let delta_x = decode(g, pv, cfg, ek)?;
    let (pred, rec) = compose_output(g, cfg, skel, delta_y, delta_x, batch)?;
    Ok(Forward {
        delta_y,
        delta_x,
        pred,
        rec,
    })
}
