//! First-order optimizers over a [`TensorMap`] of parameters.

use alloc::string::ToString;

use super::TensorMap;
use crate::linalg::Mat;
use crate::math;
use crate::{Error, Result};

pub trait Optimizer {
    /// Applies one update. Gradients for names not in `params` are ignored;
    /// a non-finite gradient aborts the whole step before anything changes.
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap) -> Result<()>;
}

fn check_finite(params: &TensorMap, grads: &TensorMap) -> Result<()> {
    for (name, g) in grads.iter() {
        if !params.contains(name) {
            continue;
        }
        if params.get(name).map(Mat::shape) != Some(g.shape()) {
            return Err(Error::DimensionMismatch {
                what: "gradient shape",
                expected: params.get(name).map_or(0, Mat::len),
                found: g.len(),
            });
        }
        if !g.is_finite() {
            return Err(Error::NonFiniteGradient(name.to_string()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Self { lr }
    }
}

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap) -> Result<()> {
        check_finite(params, grads)?;
        for (name, g) in grads.iter() {
            if let Some(p) = params.get_mut(name) {
                p.axpy(-self.lr, g);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: TensorMap,
    v: TensorMap,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: TensorMap::new(),
            v: TensorMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, params: &mut TensorMap, grads: &TensorMap) -> Result<()> {
        check_finite(params, grads)?;
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - math::powi(beta1, self.t);
        let bc2 = 1.0 - math::powi(beta2, self.t);
        for (name, g) in grads.iter() {
            let Some(p) = params.get_mut(name) else { continue };
            if !self.m.contains(name) {
                self.m.insert(name.clone(), Mat::zeros(g.rows(), g.cols()));
                self.v.insert(name.clone(), Mat::zeros(g.rows(), g.cols()));
            }
            let m = self.m.get_mut(name).unwrap();
            for (mi, gi) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
            }
            let v = self.v.get_mut(name).unwrap();
            for (vi, gi) in v.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
            }
            let (m, v) = (self.m.get(name).unwrap(), self.v.get(name).unwrap());
            for ((pi, mi), vi) in p.as_mut_slice().iter_mut().zip(m.as_slice()).zip(v.as_slice()) {
                *pi -= lr * (mi / bc1) / (math::sqrt(vi / bc2) + eps);
            }
        }
        Ok(())
    }
}
