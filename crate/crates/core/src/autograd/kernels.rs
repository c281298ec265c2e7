//! Dense kernels shared by the forward and backward rules.
//!
//! Every output row is produced by a single closure call with a fixed
//! summation order, so sequential and parallel execution give bitwise
//! identical results.

use super::Real;
use crate::par::Exec;
use crate::{Error, Result};

/// Work below this many multiply-adds never fans out.
const PAR_THRESHOLD: usize = 1 << 15;

fn policy(exec: Exec, work: usize) -> Exec {
    if work >= PAR_THRESHOLD {
        exec
    } else {
        Exec::Sequential
    }
}

/// Broadcast layout of a batched matrix product `[..a, m, k] x [..b, k, n]`.
#[derive(Clone, Debug)]
pub(crate) struct MatmulPlan {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub out_shape: Vec<usize>,
    /// For each output batch entry, the batch index into `a` and into `b`.
    pub a_batch: Vec<usize>,
    pub b_batch: Vec<usize>,
    pub a_batches: usize,
    pub b_batches: usize,
}

impl MatmulPlan {
    pub fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", a, b));
        }
        let ab = &a[..a.len() - 2];
        let bb = &b[..b.len() - 2];
        let nd = ab.len().max(bb.len());
        let pad = |s: &[usize]| -> Vec<usize> {
            let mut v = vec![1; nd - s.len()];
            v.extend_from_slice(s);
            v
        };
        let (pa, pb) = (pad(ab), pad(bb));
        let mut batch = Vec::with_capacity(nd);
        for (&x, &y) in pa.iter().zip(&pb) {
            if x == y || y == 1 {
                batch.push(x);
            } else if x == 1 {
                batch.push(y);
            } else {
                return Err(Error::shape("matmul", a, b));
            }
        }
        let total: usize = batch.iter().product();
        let mut a_batch = Vec::with_capacity(total);
        let mut b_batch = Vec::with_capacity(total);
        let mut idx = vec![0usize; nd];
        for _ in 0..total {
            let (mut ia, mut ib) = (0usize, 0usize);
            for d in 0..nd {
                ia = ia * pa[d] + if pa[d] == 1 { 0 } else { idx[d] };
                ib = ib * pb[d] + if pb[d] == 1 { 0 } else { idx[d] };
            }
            a_batch.push(ia);
            b_batch.push(ib);
            for d in (0..nd).rev() {
                idx[d] += 1;
                if idx[d] < batch[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        let mut out_shape = batch;
        out_shape.push(m);
        out_shape.push(n);
        Ok(MatmulPlan {
            m,
            k,
            n,
            out_shape,
            a_batch,
            b_batch,
            a_batches: pa.iter().product(),
            b_batches: pb.iter().product(),
        })
    }

    fn batches(&self) -> usize {
        self.a_batch.len()
    }
}

pub(crate) fn matmul_forward<T: Real>(plan: &MatmulPlan, a: &[T], b: &[T], exec: Exec) -> Vec<T> {
    let MatmulPlan { m, k, n, .. } = *plan;
    let mut out = vec![T::zero(); plan.batches() * m * n];
    if n == 0 {
        return out;
    }
    let work = plan.batches() * m * k * n;
    policy(exec, work).for_each_chunk_mut(&mut out, n, |row, dst| {
        let (bi, i) = (row / m, row % m);
        let a_row = &a[(plan.a_batch[bi] * m + i) * k..][..k];
        let b_mat = &b[plan.b_batch[bi] * k * n..][..k * n];
        for (kk, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b_mat[kk * n..(kk + 1) * n];
            for (d, &bv) in dst.iter_mut().zip(b_row) {
                *d += av * bv;
            }
        }
    });
    out
}

/// Gradient with respect to `a`: `dA = dC · Bᵀ`, summed over broadcast
/// batch entries in ascending order.
pub(crate) fn matmul_grad_a<T: Real>(plan: &MatmulPlan, g: &[T], b: &[T], exec: Exec) -> Vec<T> {
    let MatmulPlan { m, k, n, .. } = *plan;
    let mut sources: Vec<Vec<usize>> = vec![Vec::new(); plan.a_batches];
    for (bi, &ia) in plan.a_batch.iter().enumerate() {
        sources[ia].push(bi);
    }
    let mut out = vec![T::zero(); plan.a_batches * m * k];
    if k == 0 {
        return out;
    }
    let work = plan.batches() * m * k * n;
    policy(exec, work).for_each_chunk_mut(&mut out, k, |row, dst| {
        let (ia, i) = (row / m, row % m);
        for &bi in &sources[ia] {
            let g_row = &g[(bi * m + i) * n..][..n];
            let b_mat = &b[plan.b_batch[bi] * k * n..][..k * n];
            for (kk, d) in dst.iter_mut().enumerate() {
                let b_row = &b_mat[kk * n..(kk + 1) * n];
                let mut acc = T::zero();
                for (&gv, &bv) in g_row.iter().zip(b_row) {
                    acc += gv * bv;
                }
                *d += acc;
            }
        }
    });
    out
}

/// Gradient with respect to `b`: `dB = Aᵀ · dC`.
pub(crate) fn matmul_grad_b<T: Real>(plan: &MatmulPlan, g: &[T], a: &[T], exec: Exec) -> Vec<T> {
    let MatmulPlan { m, k, n, .. } = *plan;
    let mut sources: Vec<Vec<usize>> = vec![Vec::new(); plan.b_batches];
    for (bi, &ib) in plan.b_batch.iter().enumerate() {
        sources[ib].push(bi);
    }
    let mut out = vec![T::zero(); plan.b_batches * k * n];
    if n == 0 {
        return out;
    }
    let work = plan.batches() * m * k * n;
    policy(exec, work).for_each_chunk_mut(&mut out, n, |row, dst| {
        let (ib, kk) = (row / k, row % k);
        for &bi in &sources[ib] {
            let a_mat = &a[plan.a_batch[bi] * m * k..][..m * k];
            for i in 0..m {
                let av = a_mat[i * k + kk];
                if av == T::zero() {
                    continue;
                }
                let g_row = &g[(bi * m + i) * n..][..n];
                for (d, &gv) in dst.iter_mut().zip(g_row) {
                    *d += av * gv;
                }
            }
        }
    });
    out
}

/// `(outer, len, inner)` strides for reductions along `axis`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}
