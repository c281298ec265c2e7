use std::sync::Arc;

use super::kernels::{self, axis_split, MatmulPlan};
use super::tensor::numel;
use super::{Real, Tensor};
use crate::par::Exec;
use crate::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `b` broadcasts over the leading axes of `a` (its shape is a suffix).
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    Relu(Var),
    MatMul(Var, Var, Box<MatmulPlan>),
    Transpose(Var),
    Reshape(Var),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
    GatherRows(Var, Vec<usize>),
    Softmax(Var, usize),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    Mean(Var),
    Sum(Var),
    L1LastAxis(Var),
    NormalizeLastAxis(Var, f64),
    CrossLastAxis(Var, Var),
    MatrixToQuat(Var, Vec<u8>),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// Append-only computation graph.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
    exec: Exec,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Sign pattern per quaternion branch: `(diag signs, large component,
/// [(component, (row, col), (row, col), sign of second term)])`.
type QuatBranch = ([f64; 3], usize, [(usize, (usize, usize), (usize, usize), f64); 3]);

const QUAT_BRANCHES: [QuatBranch; 4] = [
    // trace dominant: w large
    (
        [1.0, 1.0, 1.0],
        0,
        [
            (1, (2, 1), (1, 2), -1.0),
            (2, (0, 2), (2, 0), -1.0),
            (3, (1, 0), (0, 1), -1.0),
        ],
    ),
    // m00 dominant: x large
    (
        [1.0, -1.0, -1.0],
        1,
        [
            (0, (2, 1), (1, 2), -1.0),
            (2, (0, 1), (1, 0), 1.0),
            (3, (0, 2), (2, 0), 1.0),
        ],
    ),
    // m11 dominant: y large
    (
        [-1.0, 1.0, -1.0],
        2,
        [
            (0, (0, 2), (2, 0), -1.0),
            (1, (0, 1), (1, 0), 1.0),
            (3, (1, 2), (2, 1), 1.0),
        ],
    ),
    // m22 dominant: z large
    (
        [-1.0, -1.0, 1.0],
        3,
        [
            (0, (1, 0), (0, 1), -1.0),
            (1, (0, 2), (2, 0), 1.0),
            (2, (1, 2), (2, 1), 1.0),
        ],
    ),
];

/// Picks the numerically safest branch for a 3×3 row-major matrix.
pub(crate) fn quat_branch(m: &[f64]) -> u8 {
    let tr = m[0] + m[4] + m[8];
    let cands = [tr, m[0], m[4], m[8]];
    let mut best = 0;
    for (i, &c) in cands.iter().enumerate().skip(1) {
        if c > cands[best] {
            best = i;
        }
    }
    best as u8
}

fn quat_branch_eval(m: &[f64], branch: u8) -> ([f64; 4], f64) {
    let (signs, big, rest) = &QUAT_BRANCHES[branch as usize];
    let u = 1.0 + signs[0] * m[0] + signs[1] * m[4] + signs[2] * m[8];
    let s = 2.0 * u.max(1e-300).sqrt();
    let mut q = [0.0; 4];
    q[*big] = 0.25 * s;
    for &(c, (r1, c1), (r2, c2), sg) in rest {
        q[c] = (m[r1 * 3 + c1] + sg * m[r2 * 3 + c2]) / s;
    }
    (q, s)
}

/// Shape of `b` must equal `a` or be a suffix of it.
fn suffix_broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<usize> {
    if b.len() > a.len() || a[a.len() - b.len()..] != *b {
        return Err(Error::shape(op, a, b));
    }
    Ok(numel(b))
}

fn reduce_suffix<T: Real>(g: &[T], len: usize) -> Vec<T> {
    let mut out = vec![T::zero(); len];
    if len == 0 {
        return out;
    }
    for chunk in g.chunks(len) {
        for (o, &v) in out.iter_mut().zip(chunk) {
            *o += v;
        }
    }
    out
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            exec: Exec::default(),
        }
    }

    pub fn with_exec(exec: Exec) -> Self {
        Graph {
            nodes: Vec::new(),
            exec,
        }
    }

    pub fn exec(&self) -> Exec {
        self.exec
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Leaf that does not receive gradients.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Leaf that receives gradients.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// Gradient-receiving leaf sharing storage with the caller.
    pub fn param_shared(&mut self, t: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant_shared(&mut self, t: Arc<Tensor<T>>) -> Var {
        self.nodes.push(Node {
            value: t,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    // ---- elementwise ----------------------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let blen = suffix_broadcast("add", ta.shape(), tb.shape())?;
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + bd[i % blen.max(1)])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let blen = suffix_broadcast("sub", ta.shape(), tb.shape())?;
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x - bd[i % blen.max(1)])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let blen = suffix_broadcast("mul", ta.shape(), tb.shape())?;
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * bd[i % blen.max(1)])
            .collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Var {
        let cc = T::lit(c);
        let out = self.value(a).map(|x| x * cc);
        let rg = self.rg(&[a]);
        self.push(out, Op::ScalarMul(a, c), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > T::zero() { x } else { T::zero() });
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    // ---- linear algebra -------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b))?;
        let data = kernels::matmul_forward(&plan, self.value(a).data(), self.value(b).data(), self.exec);
        let out = Tensor::new(plan.out_shape.clone(), data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b, Box::new(plan)), rg))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.shape();
        if s.len() < 2 {
            return Err(Error::shape("transpose", s, &[]));
        }
        let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
        let mut shape = s.to_vec();
        let nd = shape.len();
        shape.swap(nd - 2, nd - 1);
        let out = Tensor::new(shape, transpose_data(ta.data(), r, c))?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = (*self.nodes[a.0].value).clone().reshaped(shape)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (x, y))| d != axis && x != y) {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let w = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * w..(o + 1) * w]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), rg))
    }

    /// `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(Error::shape("slice", &s, &[axis, start, len]));
        }
        let (outer, alen, inner) = axis_split(&s, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * alen + start) * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut shape = s;
        shape[axis] = len;
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Slice(a, axis, start), rg))
    }

    /// Row lookup into a 2-D table: `[rows, c] -> [indices.len(), c]`.
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", &s, &[]));
        }
        let (rows, c) = (s[0], s[1]);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Config(format!(
                "frame index {bad} exceeds embedding table of {rows} rows"
            )));
        }
        let src = self.value(table).data();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        let out = Tensor::new(vec![indices.len(), c], data)?;
        let rg = self.rg(&[table]);
        Ok(self.push(out, Op::GatherRows(table, indices.to_vec()), rg))
    }

    // ---- normalization --------------------------------------------------

    /// Softmax along `axis`, stabilized by subtracting the running max.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if axis >= s.len() {
            return Err(Error::shape("softmax", &s, &[axis]));
        }
        let (outer, len, inner) = axis_split(&s, axis);
        let src = self.value(a).data();
        let mut data = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..len {
                    mx = mx.max(src[at(j)]);
                }
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (src[at(j)] - mx).exp();
                    data[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    data[at(j)] /= sum;
                }
            }
        }
        let out = Tensor::new(s, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Softmax(a, axis), rg))
    }

    /// Normalizes the last axis to zero mean / unit variance, then applies
    /// `gain` and `bias` (both shaped like the last axis).
    pub fn layernorm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or_else(|| Error::shape("layernorm", &s, &[]))?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(Error::shape("layernorm", &s, self.shape(gain)));
        }
        let src = self.value(x).data();
        let gv = self.value(gain).data();
        let bv = self.value(bias).data();
        let rows = src.len() / d.max(1);
        let mut mean = Vec::with_capacity(rows);
        let mut rstd = Vec::with_capacity(rows);
        let mut data = Vec::with_capacity(src.len());
        for row in src.chunks(d) {
            let mu = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.as_f64() - mu).powi(2)).sum::<f64>() / d as f64;
            let r = 1.0 / (var + eps).sqrt();
            for (j, &v) in row.iter().enumerate() {
                data.push(T::lit((v.as_f64() - mu) * r) * gv[j] + bv[j]);
            }
            mean.push(mu);
            rstd.push(r);
        }
        let out = Tensor::new(s, data)?;
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            },
            rg,
        ))
    }

    // ---- reductions -----------------------------------------------------

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.numel().max(1);
        let mut acc = T::zero();
        for &v in t.data() {
            acc += v;
        }
        let out = Tensor::scalar(acc / T::lit(n as f64));
        let rg = self.rg(&[a]);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let mut acc = T::zero();
        for &v in self.value(a).data() {
            acc += v;
        }
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(acc), Op::Sum(a), rg)
    }

    /// Sum of absolute values over the last axis, dropping it.
    pub fn l1_norm_lastaxis(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let d = *s.last().ok_or_else(|| Error::shape("l1_norm_lastaxis", &s, &[]))?;
        let data = self
            .value(a)
            .data()
            .chunks(d.max(1))
            .map(|row| {
                let mut acc = T::zero();
                for &v in row {
                    acc += v.abs();
                }
                acc
            })
            .collect();
        let out = Tensor::new(s[..s.len() - 1].to_vec(), data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::L1LastAxis(a), rg))
    }

    // ---- geometry helpers -----------------------------------------------

    /// `x / max(‖x‖, eps)` over the last axis.
    pub fn normalize_lastaxis(&mut self, a: Var, eps: f64) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let d = *s.last().ok_or_else(|| Error::shape("normalize_lastaxis", &s, &[]))?;
        let mut data = Vec::with_capacity(numel(&s));
        for row in self.value(a).data().chunks(d.max(1)) {
            let n = row.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt().max(eps);
            let inv = T::lit(1.0 / n);
            data.extend(row.iter().map(|&v| v * inv));
        }
        let out = Tensor::new(s, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::NormalizeLastAxis(a, eps), rg))
    }

    /// Cross product over a last axis of extent 3.
    pub fn cross_lastaxis(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb || sa.last() != Some(&3) {
            return Err(Error::shape("cross_lastaxis", &sa, &sb));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut data = Vec::with_capacity(da.len());
        for (x, y) in da.chunks(3).zip(db.chunks(3)) {
            data.extend_from_slice(&cross3(x, y));
        }
        let out = Tensor::new(sa, data)?;
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::CrossLastAxis(a, b), rg))
    }

    /// `[..., 3, 3]` rotation matrices to `[..., 4]` quaternions `(w, x, y, z)`.
    ///
    /// The branch is chosen per matrix on the largest of trace and diagonal
    /// entries; the sign of the result is whatever that branch yields.
    pub fn matrix_to_quat(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        let nd = s.len();
        if nd < 2 || s[nd - 1] != 3 || s[nd - 2] != 3 {
            return Err(Error::shape("matrix_to_quat", &s, &[3, 3]));
        }
        let src = self.value(a).to_f64_vec();
        let count = src.len() / 9;
        let mut branches = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * 4);
        for m in src.chunks(9) {
            let br = quat_branch(m);
            let (q, _) = quat_branch_eval(m, br);
            data.extend(q.iter().map(|&v| T::lit(v)));
            branches.push(br);
        }
        let mut shape = s[..nd - 2].to_vec();
        shape.push(4);
        let out = Tensor::new(shape, data)?;
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::MatrixToQuat(a, branches), rg))
    }

    // ---- backward -------------------------------------------------------

    /// Back-propagates from a single-element `loss`, accumulating into the
    /// `grad` of every node that requires gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        let shape = self.shape(loss).to_vec();
        adj[loss.0] = Some(Tensor::full(&shape, T::one()));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            for (v, contrib) in self.local_grads(i, &g)? {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut adj[v.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot => *slot = Some(contrib),
                }
            }
            match &mut self.nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn local_grads(&self, i: usize, g: &Tensor<T>) -> Result<Vec<(Var, Tensor<T>)>> {
        let node = &self.nodes[i];
        let gd = g.data();
        let out = match &node.op {
            Op::Leaf => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let blen = self.value(*b).numel();
                let mut gb = reduce_suffix(gd, blen);
                if matches!(node.op, Op::Sub(..)) {
                    gb.iter_mut().for_each(|v| *v = -*v);
                }
                vec![(*a, g.clone()), (*b, Tensor::new(self.shape(*b).to_vec(), gb)?)]
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let blen = tb.numel().max(1);
                let ga: Vec<T> = gd.iter().enumerate().map(|(j, &x)| x * tb.data()[j % blen]).collect();
                let prod: Vec<T> = gd.iter().zip(ta.data()).map(|(&x, &y)| x * y).collect();
                let gb = reduce_suffix(&prod, tb.numel());
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), ga)?),
                    (*b, Tensor::new(tb.shape().to_vec(), gb)?),
                ]
            }
            Op::ScalarMul(a, c) => {
                let cc = T::lit(*c);
                vec![(*a, g.map(|x| x * cc))]
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let data = gd
                    .iter()
                    .zip(ta.data())
                    .map(|(&x, &v)| if v > T::zero() { x } else { T::zero() })
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data)?)]
            }
            Op::MatMul(a, b, plan) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut grads = Vec::with_capacity(2);
                if self.requires_grad(*a) {
                    let da = kernels::matmul_grad_a(plan, gd, tb.data(), self.exec);
                    grads.push((*a, Tensor::new(ta.shape().to_vec(), da)?));
                }
                if self.requires_grad(*b) {
                    let db = kernels::matmul_grad_b(plan, gd, ta.data(), self.exec);
                    grads.push((*b, Tensor::new(tb.shape().to_vec(), db)?));
                }
                grads
            }
            Op::Transpose(a) => {
                let s = g.shape();
                let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
                vec![(*a, Tensor::new(self.shape(*a).to_vec(), transpose_data(gd, r, c))?)]
            }
            Op::Reshape(a) => vec![(*a, g.clone().reshaped(self.shape(*a))?)],
            Op::Concat(parts, axis) => {
                let s = g.shape();
                let (outer, total, inner) = axis_split(s, *axis);
                let mut res = Vec::with_capacity(parts.len());
                let mut offset = 0;
                for &p in parts {
                    let ps = self.shape(p).to_vec();
                    let w = ps[*axis];
                    let mut data = Vec::with_capacity(numel(&ps));
                    for o in 0..outer {
                        let base = (o * total + offset) * inner;
                        data.extend_from_slice(&gd[base..base + w * inner]);
                    }
                    offset += w;
                    res.push((p, Tensor::new(ps, data)?));
                }
                res
            }
            Op::Slice(a, axis, start) => {
                let sa = self.shape(*a).to_vec();
                let (outer, alen, inner) = axis_split(&sa, *axis);
                let len = g.shape()[*axis];
                let mut data = vec![T::zero(); numel(&sa)];
                for o in 0..outer {
                    let dst = (o * alen + start) * inner;
                    let src = o * len * inner;
                    data[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                vec![(*a, Tensor::new(sa, data)?)]
            }
            Op::GatherRows(table, indices) => {
                let st = self.shape(*table).to_vec();
                let c = st[1];
                let mut data = vec![T::zero(); numel(&st)];
                for (r, &ix) in indices.iter().enumerate() {
                    for j in 0..c {
                        data[ix * c + j] += gd[r * c + j];
                    }
                }
                vec![(*table, Tensor::new(st, data)?)]
            }
            Op::Softmax(a, axis) => {
                let y = node.value.data();
                let (outer, len, inner) = axis_split(g.shape(), *axis);
                let mut data = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for ii in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + ii;
                        let mut dot = T::zero();
                        for j in 0..len {
                            dot += gd[at(j)] * y[at(j)];
                        }
                        for j in 0..len {
                            data[at(j)] = y[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                vec![(*a, Tensor::new(g.shape().to_vec(), data)?)]
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            } => {
                let tx = self.value(*x);
                let gv = self.value(*gain).data();
                let d = gv.len();
                let mut dx = Vec::with_capacity(tx.numel());
                let mut dgain = vec![T::zero(); d];
                let mut dbias = vec![T::zero(); d];
                for (r, (row, grow)) in tx.data().chunks(d).zip(gd.chunks(d)).enumerate() {
                    let (mu, rs) = (mean[r], rstd[r]);
                    let xhat: Vec<f64> = row.iter().map(|v| (v.as_f64() - mu) * rs).collect();
                    let dxhat: Vec<f64> = grow.iter().zip(gv).map(|(&gg, &gn)| (gg * gn).as_f64()).collect();
                    let m1 = dxhat.iter().sum::<f64>() / d as f64;
                    let m2 = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dx.push(T::lit(rs * (dxhat[j] - m1 - xhat[j] * m2)));
                        dgain[j] += grow[j] * T::lit(xhat[j]);
                        dbias[j] += grow[j];
                    }
                }
                vec![
                    (*x, Tensor::new(tx.shape().to_vec(), dx)?),
                    (*gain, Tensor::new(vec![d], dgain)?),
                    (*bias, Tensor::new(vec![d], dbias)?),
                ]
            }
            Op::Mean(a) => {
                let n = self.value(*a).numel().max(1);
                let v = g.item() / T::lit(n as f64);
                vec![(*a, Tensor::full(self.shape(*a), v))]
            }
            Op::Sum(a) => vec![(*a, Tensor::full(self.shape(*a), g.item()))],
            Op::L1LastAxis(a) => {
                let ta = self.value(*a);
                let d = *ta.shape().last().unwrap_or(&1);
                let data = ta
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let gg = gd[j / d.max(1)];
                        if v > T::zero() {
                            gg
                        } else if v < T::zero() {
                            -gg
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                vec![(*a, Tensor::new(ta.shape().to_vec(), data)?)]
            }
            Op::NormalizeLastAxis(a, eps) => {
                let ta = self.value(*a);
                let d = *ta.shape().last().unwrap_or(&1);
                let y = node.value.data();
                let mut data = Vec::with_capacity(ta.numel());
                for ((row, yrow), grow) in ta.data().chunks(d).zip(y.chunks(d)).zip(gd.chunks(d)) {
                    let n = row.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
                    if n > *eps {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
                        for j in 0..d {
                            data.push(T::lit((grow[j].as_f64() - yrow[j].as_f64() * dot) / n));
                        }
                    } else {
                        data.extend(grow.iter().map(|&v| v / T::lit(*eps)));
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), data)?)]
            }
            Op::CrossLastAxis(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut da = Vec::with_capacity(ta.numel());
                let mut db = Vec::with_capacity(tb.numel());
                for ((x, y), gg) in ta.data().chunks(3).zip(tb.data().chunks(3)).zip(gd.chunks(3)) {
                    da.extend_from_slice(&cross3(y, gg));
                    db.extend_from_slice(&cross3(gg, x));
                }
                vec![
                    (*a, Tensor::new(ta.shape().to_vec(), da)?),
                    (*b, Tensor::new(tb.shape().to_vec(), db)?),
                ]
            }
            Op::MatrixToQuat(a, branches) => {
                let ta = self.value(*a);
                let src = ta.to_f64_vec();
                let mut data = vec![T::zero(); src.len()];
                for (idx, (m, gq)) in src.chunks(9).zip(gd.chunks(4)).enumerate() {
                    let br = branches[idx];
                    let (q, s) = quat_branch_eval(m, br);
                    let (signs, big, rest) = &QUAT_BRANCHES[br as usize];
                    let gq: Vec<f64> = gq.iter().map(|v| v.as_f64()).collect();
                    let dst = &mut data[idx * 9..(idx + 1) * 9];
                    let mut gs = 0.25 * gq[*big];
                    for &(c, (r1, c1), (r2, c2), sg) in rest {
                        gs -= gq[c] * q[c] / s;
                        dst[r1 * 3 + c1] += T::lit(gq[c] / s);
                        dst[r2 * 3 + c2] += T::lit(sg * gq[c] / s);
                    }
                    let du = gs * 2.0 / s;
                    for (k, sign) in signs.iter().enumerate() {
                        dst[k * 4] += T::lit(du * sign);
                    }
                }
                vec![(*a, Tensor::new(ta.shape().to_vec(), data)?)]
            }
        };
        Ok(out)
    }
}

fn transpose_data<T: Copy>(src: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(src.len());
    if r * c == 0 {
        return out;
    }
    for mat in src.chunks(r * c) {
        for j in 0..c {
            for i in 0..r {
                out.push(mat[i * c + j]);
            }
        }
    }
    out
}

fn cross3<T: Real>(a: &[T], b: &[T]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
