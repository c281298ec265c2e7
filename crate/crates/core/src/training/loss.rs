//! L1 position and quaternion losses on post-FK global quantities.

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Real, Tensor, Var};
use crate::model::{Forward, Targets};
use crate::{Error, Result};

/// Per-term losses of one step; `l_tot` is the sum of the four terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LossBreakdown {
    pub l_pos_pred: f64,
    pub l_pos_rec: f64,
    pub l_quat_pred: f64,
    pub l_quat_rec: f64,
    pub l_tot: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [
            self.l_pos_pred,
            self.l_pos_rec,
            self.l_quat_pred,
            self.l_quat_rec,
            self.l_tot,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Mean over all leading axes of the L1 norm over the last axis.
pub fn position_loss<T: Real>(g: &mut Graph<T>, pred: Var, target: Var) -> Result<Var> {
    let d = g.sub(pred, target)?;
    let l1 = g.l1_norm_lastaxis(d)?;
    Ok(g.mean(l1))
}

/// L1 between quaternions of `pred_rot` (`[..., 3, 3]`) and `target`
/// (`[..., 4]`), each prediction flipped onto its target's hemisphere.
pub fn quaternion_loss<T: Real>(g: &mut Graph<T>, pred_rot: Var, target: Var) -> Result<Var> {
    let q = g.matrix_to_quat(pred_rot)?;
    if g.shape(q) != g.shape(target) {
        return Err(Error::shape("quaternion_loss", g.shape(q), g.shape(target)));
    }
    let shape = g.shape(q).to_vec();
    let (qv, tv) = (g.value(q).data(), g.value(target).data());
    let mut signs = Vec::with_capacity(qv.len());
    for (a, b) in qv.chunks(4).zip(tv.chunks(4)) {
        let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
        let s = if dot < T::zero() { -T::one() } else { T::one() };
        signs.extend([s; 4]);
    }
    let s = g.constant(Tensor::new(shape, signs)?);
    let aligned = g.mul(q, s)?;
    position_loss(g, aligned, target)
}

/// Scalar graph losses of a forward pass plus their values.
pub struct LossVars {
    pub total: Var,
    pub breakdown: LossBreakdown,
}

/// Builds the four loss terms. Without reconstruction the key-frame terms
/// are reported as zero and left out of the total.
pub fn compute_loss<T: Real>(
    g: &mut Graph<T>,
    fwd: &Forward,
    targets: &Targets,
    reconstruction: bool,
) -> Result<LossVars> {
    let constant = |g: &mut Graph<T>, like: Var, data: &[f64], last: usize| -> Result<Var> {
        let mut shape = g.shape(like).to_vec();
        if last == 4 {
            shape.truncate(shape.len() - 2);
            shape.push(4);
        }
        Ok(g.constant(Tensor::from_f64(&shape, data)?))
    };
    let ty_pos = constant(g, fwd.pred.pos, &targets.missing_pos, 3)?;
    let ty_q = constant(g, fwd.pred.rot, &targets.missing_quat, 4)?;
    let pos_pred = position_loss(g, fwd.pred.pos, ty_pos)?;
    let quat_pred = quaternion_loss(g, fwd.pred.rot, ty_q)?;
    let mut total = g.add(pos_pred, quat_pred)?;
    let mut b = LossBreakdown {
        l_pos_pred: g.value(pos_pred).item().as_f64(),
        l_quat_pred: g.value(quat_pred).item().as_f64(),
        ..LossBreakdown::default()
    };
    if reconstruction {
        let tx_pos = constant(g, fwd.rec.pos, &targets.key_pos, 3)?;
        let tx_q = constant(g, fwd.rec.rot, &targets.key_quat, 4)?;
        let pos_rec = position_loss(g, fwd.rec.pos, tx_pos)?;
        let quat_rec = quaternion_loss(g, fwd.rec.rot, tx_q)?;
        total = g.add(total, pos_rec)?;
        total = g.add(total, quat_rec)?;
        b.l_pos_rec = g.value(pos_rec).item().as_f64();
        b.l_quat_rec = g.value(quat_rec).item().as_f64();
    }
    b.l_tot = b.l_pos_pred + b.l_pos_rec + b.l_quat_pred + b.l_quat_rec;
    Ok(LossVars { total, breakdown: b })
}
