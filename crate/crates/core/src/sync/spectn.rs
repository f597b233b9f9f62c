//! SpecTN: a small volumetric network regressing a functional map from a
//! shape's voxelized eigenbasis.
//!
//! Two kernel-2 stride-2 3D convolutions (ReLU), a hidden dense layer
//! (ReLU) and a linear output of `k_canon·k_local` values reshaped into
//! `C`. The output layer starts at zero, so an untrained network predicts
//! `C = 0`.

use alloc::format;
use alloc::string::String;

use crate::autodiff::{Bindings, Tape, TensorMap, Var};
use crate::linalg::Mat;
use crate::math;
use crate::rng::SeededRng;
use crate::{Error, Result};

use super::fmap::FunctionalMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpecTnConfig {
    /// Voxels per axis of the input grid; must be divisible by 4.
    pub resolution: usize,
    pub k_local: usize,
    pub k_canon: usize,
    pub conv1: usize,
    pub conv2: usize,
    pub hidden: usize,
}

impl Default for SpecTnConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            k_local: 15,
            k_canon: 45,
            conv1: 8,
            conv2: 16,
            hidden: 64,
        }
    }
}

const PREFIX: &str = "spectn";

fn name(part: &str) -> String {
    format!("{PREFIX}.{part}")
}

impl SpecTnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 4 || self.resolution % 4 != 0 {
            return Err(Error::BadSpec(format!(
                "SpecTN resolution {} must be a positive multiple of 4",
                self.resolution
            )));
        }
        if [self.k_local, self.k_canon, self.conv1, self.conv2, self.hidden].contains(&0) {
            return Err(Error::BadSpec("SpecTN sizes must be positive".into()));
        }
        Ok(())
    }

    fn flat_dim(&self) -> usize {
        let q = self.resolution / 4;
        q * q * q * self.conv2
    }

    /// `(name, rows, cols)` of every learnable tensor.
    pub fn param_shapes(&self) -> [(String, usize, usize); 8] {
        [
            (name("conv1.weight"), 8 * self.k_local, self.conv1),
            (name("conv1.bias"), 1, self.conv1),
            (name("conv2.weight"), 8 * self.conv1, self.conv2),
            (name("conv2.bias"), 1, self.conv2),
            (name("fc.weight"), self.flat_dim(), self.hidden),
            (name("fc.bias"), 1, self.hidden),
            (name("out.weight"), self.hidden, self.k_canon * self.k_local),
            (name("out.bias"), 1, self.k_canon * self.k_local),
        ]
    }

    /// He-normal weights, zero biases, zero output layer.
    pub fn init_params(&self, rng: &mut SeededRng, params: &mut TensorMap) -> Result<()> {
        self.validate()?;
        for (n, r, c) in self.param_shapes() {
            let m = if n.ends_with("bias") || n.starts_with(&name("out")) {
                Mat::zeros(r, c)
            } else {
                let std = math::sqrt(2.0 / r as f64);
                Mat::from_fn(r, c, |_, _| std * rng.normal())
            };
            params.insert(n, m);
        }
        Ok(())
    }

    /// Records the regressor on `tape` and returns the `k_canon × k_local`
    /// map node. `input` is the `R³ × k_local` voxel basis.
    pub fn forward_on_tape(&self, tape: &mut Tape, vars: &Bindings, input: Var) -> Result<Var> {
        let (rows, cols) = tape.value(input).shape();
        let r = self.resolution;
        if rows != r * r * r || cols != self.k_local {
            return Err(Error::DimensionMismatch {
                what: "SpecTN input",
                expected: r * r * r * self.k_local,
                found: rows * cols,
            });
        }
        let p1 = tape.patchify(input, r, 2)?;
        let h1 = tape.matmul(p1, vars.get(&name("conv1.weight"))?)?;
        let h1 = tape.add_row(h1, vars.get(&name("conv1.bias"))?)?;
        let h1 = tape.relu(h1);
        let p2 = tape.patchify(h1, r / 2, 2)?;
        let h2 = tape.matmul(p2, vars.get(&name("conv2.weight"))?)?;
        let h2 = tape.add_row(h2, vars.get(&name("conv2.bias"))?)?;
        let h2 = tape.relu(h2);
        let flat = tape.reshape(h2, 1, self.flat_dim())?;
        let h3 = tape.matmul(flat, vars.get(&name("fc.weight"))?)?;
        let h3 = tape.add_row(h3, vars.get(&name("fc.bias"))?)?;
        let h3 = tape.relu(h3);
        let o = tape.matmul(h3, vars.get(&name("out.weight"))?)?;
        let o = tape.add_row(o, vars.get(&name("out.bias"))?)?;
        tape.reshape(o, self.k_canon, self.k_local)
    }

    /// Standalone evaluation.
    pub fn forward(&self, params: &TensorMap, input: &Mat) -> Result<FunctionalMap> {
        let mut tape = Tape::new();
        let vars = tape.bind(&self.subset(params)?);
        let x = tape.constant(input.clone());
        let c = self.forward_on_tape(&mut tape, &vars, x)?;
        FunctionalMap::new(tape.value(c).clone())
    }

    /// The SpecTN tensors of `params`, shape-checked.
    pub fn subset(&self, params: &TensorMap) -> Result<TensorMap> {
        let mut out = TensorMap::new();
        for (n, r, c) in self.param_shapes() {
            let m = params.require(&n)?;
            if m.shape() != (r, c) {
                return Err(Error::DimensionMismatch {
                    what: "SpecTN parameter",
                    expected: r * c,
                    found: m.len(),
                });
            }
            out.insert(n, m.clone());
        }
        Ok(out)
    }
}

/// `true` for names owned by SpecTN.
pub fn is_spectn_param(name: &str) -> bool {
    name.starts_with(PREFIX) && name[PREFIX.len()..].starts_with('.')
}
