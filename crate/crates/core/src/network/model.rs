//! Parameters and the forward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::config::{BnEval, ModelConfig};
use crate::autodiff::{BatchStats, Bindings, Tape, TensorMap, Var};
use crate::eigen::SpectralBasis;
use crate::linalg::Mat;
use crate::math;
use crate::rng::SeededRng;
use crate::spectral::{kernel_design, KernelKind};
use crate::{Error, Result};

/// Where the functional map of SpecTN blocks comes from.
#[derive(Clone, Copy, Debug)]
pub enum FmapInput<'a> {
    /// No synchronization: the free multipliers act directly on the first
    /// `k_canon` coefficients.
    Identity,
    /// A given `k_canon × k_local` map, held constant.
    Fixed(&'a Mat),
    /// The `R³ × k_local` voxel basis fed through the learnable SpecTN.
    Learned(&'a Mat),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Batch statistics and dropout; masks are drawn from `seed`.
    Train { seed: u64 },
    /// Batch statistics without dropout, for re-estimating running
    /// averages.
    Statistics,
}

/// Handles into a recorded forward pass.
pub struct ForwardPass {
    pub output: Var,
    /// The functional map node when SpecTN blocks ran with a map.
    pub fmap: Option<Var>,
    /// Per-block batch statistics (train mode with batch norm only).
    pub bn_stats: Vec<(usize, BatchStats)>,
    pub bindings: Bindings,
}

pub(crate) fn layer_name(l: usize, part: &str) -> String {
    format!("layer{}.{part}", l + 1)
}

/// Learnable tensors, batch-norm running statistics and the step counter
/// of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: TensorMap,
    buffers: TensorMap,
    step: u64,
}

impl Model {
    /// `(name, rows, cols)` of every learnable tensor implied by `config`.
    pub fn param_shapes(config: &ModelConfig) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (l, layer) in config.layers.iter().enumerate() {
            let cin = config.layer_in_channels(l);
            out.push((layer_name(l, "omega"), layer.kernel_params, cin));
            out.push((layer_name(l, "conv.weight"), config.mix_in_channels(l), layer.out_channels));
            out.push((layer_name(l, "conv.bias"), 1, layer.out_channels));
            if config.batch_norm {
                out.push((layer_name(l, "bn.gamma"), 1, layer.out_channels));
                out.push((layer_name(l, "bn.beta"), 1, layer.out_channels));
            }
        }
        if let Some(h) = config.head {
            let cin = config.layers.last().map_or(config.in_channels, |l| l.out_channels);
            out.push((String::from("head.weight"), cin, h.out_dim()));
            out.push((String::from("head.bias"), 1, h.out_dim()));
        }
        if config.uses_spectn() {
            out.extend(config.spectn.param_shapes());
        }
        out
    }

    pub fn buffer_shapes(config: &ModelConfig) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        if config.batch_norm {
            for (l, layer) in config.layers.iter().enumerate() {
                out.push((layer_name(l, "bn.running_mean"), 1, layer.out_channels));
                out.push((layer_name(l, "bn.running_var"), 1, layer.out_channels));
            }
        }
        out
    }

    /// Fresh model: identity spectral kernels, He-initialized 1×1
    /// convolutions, unit/zero batch-norm affine, zero SpecTN output layer.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = SeededRng::new(seed);
        let mut params = TensorMap::new();
        for (l, layer) in config.layers.iter().enumerate() {
            let kind = config.layer_kernel(l);
            let cin = config.layer_in_channels(l);
            let w = kind.identity_coefficients(layer.kernel_params);
            params.insert(layer_name(l, "omega"), Mat::from_fn(w.len(), cin, |i, _| w[i]));
            let fan_in = config.mix_in_channels(l);
            let std = math::sqrt(2.0 / fan_in as f64);
            params.insert(
                layer_name(l, "conv.weight"),
                Mat::from_fn(fan_in, layer.out_channels, |_, _| std * rng.normal()),
            );
            params.insert(layer_name(l, "conv.bias"), Mat::zeros(1, layer.out_channels));
            if config.batch_norm {
                params.insert(layer_name(l, "bn.gamma"), Mat::filled(1, layer.out_channels, 1.0));
                params.insert(layer_name(l, "bn.beta"), Mat::zeros(1, layer.out_channels));
            }
        }
        if let Some(h) = config.head {
            let cin = config.layers.last().map_or(config.in_channels, |l| l.out_channels);
            let std = math::sqrt(1.0 / cin as f64);
            params.insert("head.weight", Mat::from_fn(cin, h.out_dim(), |_, _| std * rng.normal()));
            params.insert("head.bias", Mat::zeros(1, h.out_dim()));
        }
        if config.uses_spectn() {
            config.spectn.init_params(&mut rng.fork(0x5AEC), &mut params)?;
        }
        let mut buffers = TensorMap::new();
        for (name, r, c) in Self::buffer_shapes(&config) {
            let fill = if name.ends_with("running_var") { 1.0 } else { 0.0 };
            buffers.insert(name, Mat::filled(r, c, fill));
        }
        Ok(Self {
            config,
            params,
            buffers,
            step: 0,
        })
    }

    /// Reassembles a model, checking every tensor against `config`.
    pub fn from_parts(config: ModelConfig, params: TensorMap, buffers: TensorMap, step: u64) -> Result<Self> {
        config.validate()?;
        for (expected, map) in [(Self::param_shapes(&config), &params), (Self::buffer_shapes(&config), &buffers)] {
            for (name, r, c) in &expected {
                let t = map.require(name)?;
                if t.shape() != (*r, *c) {
                    return Err(Error::DimensionMismatch {
                        what: "checkpoint tensor",
                        expected: r * c,
                        found: t.len(),
                    });
                }
            }
            if map.len() != expected.len() {
                let extra = map.names().find(|n| !expected.iter().any(|e| &e.0 == *n));
                return Err(Error::InvalidArgument(format!(
                    "unexpected tensor '{}'",
                    extra.map_or("?", |s| s.as_str())
                )));
            }
        }
        Ok(Self {
            config,
            params,
            buffers,
            step,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &TensorMap {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut TensorMap {
        &mut self.params
    }

    pub fn buffers(&self) -> &TensorMap {
        &self.buffers
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    /// Overwrites the running averages with `stats` directly.
    pub fn set_running_stats(&mut self, l: usize, mean: &[f64], var: &[f64]) -> Result<()> {
        for (part, v) in [("bn.running_mean", mean), ("bn.running_var", var)] {
            let name = layer_name(l, part);
            let buf = self.buffers.get_mut(&name).ok_or(Error::MissingTensor(name))?;
            if buf.len() != v.len() {
                return Err(Error::DimensionMismatch {
                    what: "running statistics",
                    expected: buf.len(),
                    found: v.len(),
                });
            }
            buf.as_mut_slice().copy_from_slice(v);
        }
        Ok(())
    }

    /// Folds batch statistics into the running averages.
    pub fn update_running_stats(&mut self, stats: &[(usize, BatchStats)]) {
        let mom = self.config.bn_momentum;
        for (l, s) in stats {
            let n = s.mean.len();
            if let Some(rm) = self.buffers.get_mut(&layer_name(*l, "bn.running_mean")) {
                for (r, v) in rm.as_mut_slice().iter_mut().zip(&s.mean).take(n) {
                    *r = (1.0 - mom) * *r + mom * v;
                }
            }
            if let Some(rv) = self.buffers.get_mut(&layer_name(*l, "bn.running_var")) {
                for (r, v) in rv.as_mut_slice().iter_mut().zip(&s.var).take(n) {
                    *r = (1.0 - mom) * *r + mom * v;
                }
            }
        }
    }

    /// Records the forward pass on `tape`.
    pub fn record(
        &self,
        tape: &mut Tape,
        basis: &SpectralBasis,
        fmap: FmapInput<'_>,
        input: &Mat,
        mode: Mode,
    ) -> Result<ForwardPass> {
        let cfg = &self.config;
        let n = basis.n();
        let m = basis.m();
        if input.rows() != n {
            return Err(Error::DimensionMismatch {
                what: "input rows vs basis",
                expected: n,
                found: input.rows(),
            });
        }
        if input.cols() != cfg.in_channels {
            return Err(Error::DimensionMismatch {
                what: "input channels",
                expected: cfg.in_channels,
                found: input.cols(),
            });
        }
        let vars = tape.bind(&self.params);
        let b = tape.constant(basis.vectors().clone());
        let lambda = basis.eigenvalues();
        let mut rng = match mode {
            Mode::Train { seed } => Some(SeededRng::new(seed)),
            Mode::Eval | Mode::Statistics => None,
        };

        let fmap_var = if cfg.uses_spectn() {
            match fmap {
                FmapInput::Identity => None,
                FmapInput::Fixed(c) => {
                    if c.shape() != (cfg.spectn.k_canon, cfg.spectn.k_local) {
                        return Err(Error::DimensionMismatch {
                            what: "functional map shape",
                            expected: cfg.spectn.k_canon * cfg.spectn.k_local,
                            found: c.len(),
                        });
                    }
                    Some(tape.constant(c.clone()))
                }
                FmapInput::Learned(voxels) => {
                    let x = tape.constant(voxels.clone());
                    Some(cfg.spectn.forward_on_tape(tape, &vars, x)?)
                }
            }
        } else {
            None
        };
        if fmap_var.is_some() && m < cfg.spectn.k_local {
            return Err(Error::DimensionMismatch {
                what: "basis size for functional map",
                expected: cfg.spectn.k_local,
                found: m,
            });
        }

        let mut x = tape.constant(input.clone());
        let mut acts: Vec<Var> = Vec::with_capacity(cfg.layers.len());
        let mut bn_stats = Vec::new();
        for (l, layer) in cfg.layers.iter().enumerate() {
            let cin = cfg.layer_in_channels(l);
            let omega = vars.get(&layer_name(l, "omega"))?;
            let alpha = tape.t_matmul(b, x)?;
            let filtered = if layer.uses_spectn {
                self.synchronized_filter(tape, alpha, omega, fmap_var, m, cin)?
            } else {
                let phi = kernel_design(cfg.layer_kernel(l), layer.dilation, layer.kernel_params, lambda)?;
                let phi = tape.constant(phi);
                let mult = tape.matmul(phi, omega)?;
                tape.mul(alpha, mult)?
            };
            let mut y = tape.matmul(b, filtered)?;
            if cfg.skip_target == Some(l + 1) {
                let mut parts = Vec::with_capacity(1 + cfg.skip_sources.len());
                parts.push(y);
                parts.extend(cfg.skip_sources.iter().map(|&s| acts[s - 1]));
                y = tape.hstack(&parts)?;
            }
            let z = tape.matmul(y, vars.get(&layer_name(l, "conv.weight"))?)?;
            let mut z = tape.add_row(z, vars.get(&layer_name(l, "conv.bias"))?)?;
            if cfg.batch_norm {
                let gamma = vars.get(&layer_name(l, "bn.gamma"))?;
                let beta = vars.get(&layer_name(l, "bn.beta"))?;
                z = match mode {
                    Mode::Train { .. } | Mode::Statistics => {
                        let (out, stats) = tape.batch_norm(z, gamma, beta, cfg.bn_eps)?;
                        bn_stats.push((l, stats));
                        out
                    }
                    Mode::Eval if cfg.bn_eval == BnEval::PerShape => tape.batch_norm(z, gamma, beta, cfg.bn_eps)?.0,
                    Mode::Eval => {
                        let mean = self.buffers.require(&layer_name(l, "bn.running_mean"))?;
                        let var = self.buffers.require(&layer_name(l, "bn.running_var"))?;
                        let shift = tape.constant(mean.scale(-1.0));
                        let inv = tape.constant(var.map(|v| 1.0 / math::sqrt(v + cfg.bn_eps)));
                        let centered = tape.add_row(z, shift)?;
                        let normed = tape.mul_row(centered, inv)?;
                        let scaled = tape.mul_row(normed, gamma)?;
                        tape.add_row(scaled, beta)?
                    }
                };
            }
            // Checked before ReLU, which would silently map NaN to zero.
            if !tape.value(z).is_finite() {
                return Err(Error::NonFiniteActivation { layer: l + 1 });
            }
            if cfg.relu {
                z = tape.relu(z);
            }
            if let Some(rng) = rng.as_mut() {
                if cfg.dropout > 0.0 {
                    let keep = 1.0 - cfg.dropout;
                    let (r, c) = tape.value(z).shape();
                    let mask = Mat::from_fn(r, c, |_, _| if rng.uniform() < keep { 1.0 / keep } else { 0.0 });
                    let mask = tape.constant(mask);
                    z = tape.mul(z, mask)?;
                }
            }
            acts.push(z);
            x = z;
        }
        let output = if cfg.head.is_some() {
            let h = tape.matmul(x, vars.get("head.weight")?)?;
            let h = tape.add_row(h, vars.get("head.bias")?)?;
            if !tape.value(h).is_finite() {
                return Err(Error::NonFiniteActivation {
                    layer: cfg.layers.len() + 1,
                });
            }
            h
        } else {
            x
        };
        Ok(ForwardPass {
            output,
            fmap: fmap_var,
            bn_stats,
            bindings: vars,
        })
    }

    /// Map into the canonical domain, free per-coefficient multipliers,
    /// map back. Coefficients outside the mapped range pass through.
    fn synchronized_filter(
        &self,
        tape: &mut Tape,
        alpha: Var,
        omega: Var,
        fmap: Option<Var>,
        m: usize,
        cin: usize,
    ) -> Result<Var> {
        let k_canon = self.config.spectn.k_canon;
        let k_local = self.config.spectn.k_local;
        let Some(c) = fmap else {
            let k = k_canon.min(m);
            let mut mult = tape.slice_rows(omega, 0, k)?;
            if m > k {
                let ones = tape.constant(Mat::filled(m - k, cin, 1.0));
                mult = tape.vstack(mult, ones)?;
            }
            return tape.mul(alpha, mult);
        };
        let head = tape.slice_rows(alpha, 0, k_local)?;
        let mut canon = tape.matmul(c, head)?;
        let mut mult = omega;
        if m > k_local {
            let tail = tape.slice_rows(alpha, k_local, m)?;
            canon = tape.vstack(canon, tail)?;
            let ones = tape.constant(Mat::filled(m - k_local, cin, 1.0));
            mult = tape.vstack(omega, ones)?;
        }
        let filtered = tape.mul(canon, mult)?;
        let fhead = tape.slice_rows(filtered, 0, k_canon)?;
        let mut back = tape.t_matmul(c, fhead)?;
        if m > k_local {
            let ftail = tape.slice_rows(filtered, k_canon, k_canon + m - k_local)?;
            back = tape.vstack(back, ftail)?;
        }
        Ok(back)
    }

    /// Eval-mode output.
    pub fn predict(&self, basis: &SpectralBasis, fmap: FmapInput<'_>, input: &Mat) -> Result<Mat> {
        let mut tape = Tape::new();
        let pass = self.record(&mut tape, basis, fmap, input, Mode::Eval)?;
        Ok(tape.value(pass.output).clone())
    }

    /// Kernel multipliers of block `l` for every channel (`len(λ) × c`).
    /// SpecTN blocks report their free multipliers.
    pub fn layer_multipliers(&self, l: usize, lambda: &[f64]) -> Result<Mat> {
        let layer = self.config.layers.get(l).ok_or(Error::OutOfBounds(l))?;
        let omega = self.params.require(&layer_name(l, "omega"))?;
        let kind = self.config.layer_kernel(l);
        if kind == KernelKind::Free {
            return Ok(omega.clone());
        }
        Ok(kernel_design(kind, layer.dilation, layer.kernel_params, lambda)?.matmul(omega))
    }
}
