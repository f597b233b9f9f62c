//! Scalar objectives built on the tape.

use alloc::vec::Vec;

use super::{Tape, Var};
use crate::linalg::Mat;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    L2,
    SpectnPretrain,
    OrthoPenalty,
}

/// One weighted term of a composite objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub weight: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("loss weight must be ≥ 0, got {weight}")));
        }
        Ok(Self { kind, weight })
    }
}

impl Tape {
    /// Mean over rows of `‖pred_i − target_i‖²`.
    pub fn l2_loss(&mut self, pred: Var, target: &Mat) -> Result<Var> {
        let n = self.value(pred).rows().max(1);
        let t = self.constant(target.clone());
        let d = self.sub(pred, t)?;
        let s = self.sum_squares(d);
        Ok(self.scale(s, 1.0 / n as f64))
    }

    /// `‖C − C_pre‖²_F`.
    pub fn spectn_pretrain_loss(&mut self, c: Var, c_pre: &Mat) -> Result<Var> {
        let t = self.constant(c_pre.clone());
        let d = self.sub(c, t)?;
        Ok(self.sum_squares(d))
    }

    /// Orthogonality penalty on the Gram matrix of the short side of `C`:
    /// `‖CCᵀ − I‖²_F` when C is wide or square, `‖CᵀC − I‖²_F` when tall.
    pub fn ortho_penalty(&mut self, c: Var) -> Result<Var> {
        let (r, k) = self.value(c).shape();
        let gram = if r <= k { self.matmul_t(c, c)? } else { self.t_matmul(c, c)? };
        let eye = self.constant(Mat::identity(r.min(k)));
        let d = self.sub(gram, eye)?;
        Ok(self.sum_squares(d))
    }

    /// `Σ wᵢ·termᵢ`.
    pub fn weighted_sum(&mut self, terms: &[(LossSpec, Var)]) -> Result<Var> {
        let mut parts: Vec<Var> = Vec::with_capacity(terms.len());
        for (spec, v) in terms {
            if self.value(*v).shape() != (1, 1) {
                return Err(Error::DimensionMismatch {
                    what: "loss term",
                    expected: 1,
                    found: self.value(*v).len(),
                });
            }
            parts.push(self.scale(*v, spec.weight));
        }
        let mut acc = match parts.first() {
            Some(&p) => p,
            None => return Err(Error::InvalidArgument("empty objective".into())),
        };
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }
}

/// Plain-value versions of the synchronization losses.
pub fn spectn_losses(c: &Mat, c_pre: &Mat) -> Result<(f64, f64)> {
    if c.shape() != c_pre.shape() {
        return Err(Error::DimensionMismatch {
            what: "C_pre shape",
            expected: c.len(),
            found: c_pre.len(),
        });
    }
    let pre = c.sub(c_pre).sum_squares();
    let (r, k) = c.shape();
    let gram = if r <= k { c.matmul_t(c) } else { c.t_matmul(c) };
    let ortho = gram.sub(&Mat::identity(r.min(k))).sum_squares();
    Ok((pre, ortho))
}
