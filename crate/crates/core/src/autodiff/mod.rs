//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records a forward computation as a flat list of nodes; each
//! node keeps its value and whatever the backward rule needs. Calling
//! [`Tape::backward`] on a scalar node walks the list once in reverse and
//! returns gradients for every named parameter leaf.
//!
//! The operator set is exactly what the spectral network, the SpecTN
//! regressor and their losses need; it is not a general tensor library.

mod loss;
mod optim;

pub use loss::{spectn_losses, LossKind, LossSpec};
pub use optim::{Adam, AdamConfig, Optimizer, Sgd};

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::Mat;
use crate::math;
use crate::{Error, Result};

/// Named tensors: model parameters, buffers or gradients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorMap(BTreeMap<String, Mat>);

impl TensorMap {
    pub fn new() -> Self {
        Self(BTreeMap::new())
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Mat) {
        self.0.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Mat> {
        self.0.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat> {
        self.0.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Mat> {
        self.0.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Mat> {
        self.0.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Mat)> {
        self.0.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Mat)> {
        self.0.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.0.values().map(Mat::len).sum()
    }

    /// Adds `other` entrywise into `self`, inserting missing names.
    pub fn accumulate(&mut self, other: &TensorMap) {
        for (name, g) in other.iter() {
            match self.0.get_mut(name) {
                Some(acc) => acc.add_assign(g),
                None => {
                    self.0.insert(name.clone(), g.clone());
                }
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self.0.values_mut() {
            *m = m.scale(s);
        }
    }
}

impl FromIterator<(String, Mat)> for TensorMap {
    fn from_iter<I: IntoIterator<Item = (String, Mat)>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

/// Tape handles for a set of parameters, looked up by name.
#[derive(Clone, Debug, Default)]
pub struct Bindings(BTreeMap<String, Var>);

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.0.get(name).copied().ok_or_else(|| Error::MissingTensor(name.to_string()))
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    TMatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Relu(Var),
    SliceRows(Var, usize, usize),
    VStack(Var, Var),
    HStack(Vec<Var>),
    Reshape(Var),
    Patchify {
        input: Var,
        gather: Vec<usize>,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Mat,
        inv_std: Vec<f64>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Mat,
    },
    SumSquares(Var),
    Sum(Var),
}

struct Node {
    value: Mat,
    op: Op,
    requires_grad: bool,
}

/// Batch statistics produced by a training-mode batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(what: &'static str, expected: usize, found: usize) -> Error {
    Error::DimensionMismatch { what, expected, found }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Mat, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// A trainable leaf. Gradients are reported under `name`.
    pub fn param(&mut self, name: impl Into<String>, value: Mat) -> Var {
        self.push(value, Op::Param(name.into()), true)
    }

    /// Registers every tensor of `params` as a named leaf.
    pub fn bind(&mut self, params: &TensorMap) -> Bindings {
        Bindings(
            params
                .iter()
                .map(|(name, value)| (name.clone(), self.param(name.clone(), value.clone())))
                .collect(),
        )
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(shape_err("matmul", va.cols(), vb.rows()));
        }
        let out = va.matmul(vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `aᵀ·b`.
    pub fn t_matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rows() != vb.rows() {
            return Err(shape_err("t_matmul", va.rows(), vb.rows()));
        }
        let out = va.t_matmul(vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::TMatMul(a, b), rg))
    }

    /// `a·bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(shape_err("matmul_t", va.cols(), vb.cols()));
        }
        let out = va.matmul_t(vb);
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::MatMulT(a, b), rg))
    }

    fn same_shape(&self, a: Var, b: Var, what: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(what, sa.0 * sa.1, sb.0 * sb.1));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).add(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let out = self.value(a).sub(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Entrywise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).hadamard(self.value(b));
        let rg = self.rg(&[a, b]);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    fn check_row(&self, a: Var, row: Var, what: &'static str) -> Result<()> {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.rows() != 1 || vr.cols() != va.cols() {
            return Err(shape_err(what, va.cols(), vr.cols()));
        }
        Ok(())
    }

    /// Adds the `1×c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        self.check_row(a, bias, "add_row")?;
        let (va, vb) = (self.value(a), self.value(bias));
        let out = Mat::from_fn(va.rows(), va.cols(), |i, j| va[(i, j)] + vb[(0, j)]);
        let rg = self.rg(&[a, bias]);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    /// Multiplies every row of `a` entrywise by the `1×c` row `scale`.
    pub fn mul_row(&mut self, a: Var, scale: Var) -> Result<Var> {
        self.check_row(a, scale, "mul_row")?;
        let (va, vs) = (self.value(a), self.value(scale));
        let out = Mat::from_fn(va.rows(), va.cols(), |i, j| va[(i, j)] * vs[(0, j)]);
        let rg = self.rg(&[a, scale]);
        Ok(self.push(out, Op::MulRow(a, scale), rg))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.rg(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let rows = self.value(a).rows();
        if start > end || end > rows {
            return Err(shape_err("slice_rows", rows, end));
        }
        let out = self.value(a).slice_rows(start, end);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start, end), rg))
    }

    pub fn vstack(&mut self, top: Var, bottom: Var) -> Result<Var> {
        let (vt, vb) = (self.value(top), self.value(bottom));
        if vt.cols() != vb.cols() {
            return Err(shape_err("vstack", vt.cols(), vb.cols()));
        }
        let out = vt.vstack(vb);
        let rg = self.rg(&[top, bottom]);
        Ok(self.push(out, Op::VStack(top, bottom), rg))
    }

    pub fn hstack(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |p| self.value(*p).rows());
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(shape_err("hstack", rows, self.value(*p).rows()));
        }
        let mats: Vec<&Mat> = parts.iter().map(|p| self.value(*p)).collect();
        let out = Mat::hstack(&mats);
        let rg = self.rg(parts);
        Ok(self.push(out, Op::HStack(parts.to_vec()), rg))
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let len = self.value(a).len();
        if rows * cols != len {
            return Err(shape_err("reshape", len, rows * cols));
        }
        let out = self.value(a).reshape(rows, cols);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// Regroups a voxel grid for a kernel-equals-stride 3D convolution.
    ///
    /// `a` has one row per voxel of a `res³` grid (linear index
    /// `(x·res + y)·res + z`) and `c` channels. The output has one row per
    /// `stride³` block and `stride³·c` columns, ordered by block offset
    /// `(dx, dy, dz)` then channel. A matmul with a `(stride³·c) × c_out`
    /// weight then completes the convolution.
    pub fn patchify(&mut self, a: Var, res: usize, stride: usize) -> Result<Var> {
        let va = self.value(a);
        if stride == 0 || res % stride != 0 || va.rows() != res * res * res {
            return Err(shape_err("patchify grid", res * res * res, va.rows()));
        }
        let c = va.cols();
        let out_res = res / stride;
        let k3 = stride * stride * stride;
        let mut gather = Vec::with_capacity(va.len());
        for bx in 0..out_res {
            for by in 0..out_res {
                for bz in 0..out_res {
                    for dx in 0..stride {
                        for dy in 0..stride {
                            for dz in 0..stride {
                                let (x, y, z) = (bx * stride + dx, by * stride + dy, bz * stride + dz);
                                let src = (x * res + y) * res + z;
                                for ch in 0..c {
                                    gather.push(src * c + ch);
                                }
                            }
                        }
                    }
                }
            }
        }
        let src = va.as_slice();
        let data: Vec<f64> = gather.iter().map(|&g| src[g]).collect();
        let out = Mat::from_vec(out_res * out_res * out_res, k3 * c, data);
        let rg = self.rg(&[a]);
        Ok(self.push(out, Op::Patchify { input: a, gather }, rg))
    }

    /// Training-mode batch normalization over rows (vertices), per column.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        self.check_row(x, gamma, "batch_norm gamma")?;
        self.check_row(x, beta, "batch_norm beta")?;
        let vx = self.value(x);
        let (n, c) = vx.shape();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for i in 0..n {
            for (j, mj) in mean.iter_mut().enumerate() {
                *mj += vx[(i, j)];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        for i in 0..n {
            for j in 0..c {
                let d = vx[(i, j)] - mean[j];
                var[j] += d * d;
            }
        }
        var.iter_mut().for_each(|v| *v /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + eps)).collect();
        let normalized = Mat::from_fn(n, c, |i, j| (vx[(i, j)] - mean[j]) * inv_std[j]);
        let (vg, vb) = (self.value(gamma), self.value(beta));
        let out = Mat::from_fn(n, c, |i, j| vg[(0, j)] * normalized[(i, j)] + vb[(0, j)]);
        let rg = self.rg(&[x, gamma, beta]);
        let v = self.push(
            out,
            Op::BatchNorm {
                input: x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            rg,
        );
        Ok((v, BatchStats { mean, var }))
    }

    /// Mean over rows of `−log softmax(logits)[label]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let vl = self.value(logits);
        let (n, k) = vl.shape();
        if labels.len() != n {
            return Err(shape_err("cross-entropy labels", n, labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(shape_err("cross-entropy class", k, bad));
        }
        let mut probs = Mat::zeros(n, k);
        let mut loss = 0.0;
        for i in 0..n {
            let row = vl.row(i);
            let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| math::exp(v - mx)).sum();
            for j in 0..k {
                probs[(i, j)] = math::exp(row[j] - mx) / z;
            }
            loss += -(row[labels[i]] - mx - math::ln(z));
        }
        let out = Mat::scalar(loss / n as f64);
        let rg = self.rg(&[logits]);
        Ok(self.push(
            out,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let out = Mat::scalar(self.value(a).sum_squares());
        let rg = self.rg(&[a]);
        self.push(out, Op::SumSquares(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Mat::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::Sum(a), rg)
    }

    /// `⟨a, u⟩` for a constant `u`.
    pub fn dot_const(&mut self, a: Var, u: Mat) -> Result<Var> {
        let c = self.constant(u);
        let p = self.mul(a, c)?;
        Ok(self.sum(p))
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf
    /// on the tape. Leaves the loss does not reach get zeros.
    pub fn backward(&self, loss: Var) -> Result<TensorMap> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(shape_err("backward on non-scalar", 1, lv.len()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::DisconnectedLoss);
        }
        let mut grads: Vec<Option<Mat>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Mat::scalar(1.0));
        let mut out = TensorMap::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let send = |grads: &mut Vec<Option<Mat>>, v: Var, contrib: Mat| {
                if !self.nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => match out.get_mut(name) {
                    Some(acc) => acc.add_assign(&g),
                    None => out.insert(name.clone(), g),
                },
                Op::MatMul(a, b) => {
                    if self.requires_grad(*a) {
                        send(&mut grads, *a, g.matmul_t(self.value(*b)));
                    }
                    if self.requires_grad(*b) {
                        send(&mut grads, *b, self.value(*a).t_matmul(&g));
                    }
                }
                Op::TMatMul(a, b) => {
                    // y = aᵀb: da = b·gᵀ, db = a·g
                    if self.requires_grad(*a) {
                        send(&mut grads, *a, self.value(*b).matmul_t(&g));
                    }
                    if self.requires_grad(*b) {
                        send(&mut grads, *b, self.value(*a).matmul(&g));
                    }
                }
                Op::MatMulT(a, b) => {
                    // y = a·bᵀ: da = g·b, db = gᵀ·a
                    if self.requires_grad(*a) {
                        send(&mut grads, *a, g.matmul(self.value(*b)));
                    }
                    if self.requires_grad(*b) {
                        send(&mut grads, *b, g.t_matmul(self.value(*a)));
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, g.clone());
                    send(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *b, g.scale(-1.0));
                    send(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(*a) {
                        send(&mut grads, *a, g.hadamard(self.value(*b)));
                    }
                    if self.requires_grad(*b) {
                        send(&mut grads, *b, g.hadamard(self.value(*a)));
                    }
                }
                Op::Scale(a, s) => send(&mut grads, *a, g.scale(*s)),
                Op::AddRow(a, bias) => {
                    if self.requires_grad(*bias) {
                        send(&mut grads, *bias, column_sums(&g));
                    }
                    send(&mut grads, *a, g);
                }
                Op::MulRow(a, s) => {
                    let va = self.value(*a);
                    let vs = self.value(*s);
                    if self.requires_grad(*s) {
                        send(&mut grads, *s, column_sums(&g.hadamard(va)));
                    }
                    if self.requires_grad(*a) {
                        let ga = Mat::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] * vs[(0, j)]);
                        send(&mut grads, *a, ga);
                    }
                }
                Op::Relu(a) => {
                    let va = self.value(*a);
                    send(&mut grads, *a, g.zip_map(va, |gi, x| if x > 0.0 { gi } else { 0.0 }));
                }
                Op::SliceRows(a, start, _end) => {
                    let va = self.value(*a);
                    let mut full = Mat::zeros(va.rows(), va.cols());
                    for i in 0..g.rows() {
                        full.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    send(&mut grads, *a, full);
                }
                Op::VStack(top, bottom) => {
                    let split = self.value(*top).rows();
                    send(&mut grads, *top, g.slice_rows(0, split));
                    send(&mut grads, *bottom, g.slice_rows(split, g.rows()));
                }
                Op::HStack(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        send(&mut grads, *p, g.slice_cols(off, off + w));
                        off += w;
                    }
                }
                Op::Reshape(a) => {
                    let (r, c) = self.value(*a).shape();
                    send(&mut grads, *a, g.reshape(r, c));
                }
                Op::Patchify { input, gather } => {
                    let (r, c) = self.value(*input).shape();
                    let mut full = Mat::zeros(r, c);
                    let dst = full.as_mut_slice();
                    for (gv, &src) in g.as_slice().iter().zip(gather) {
                        dst[src] += gv;
                    }
                    send(&mut grads, *input, full);
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                } => {
                    let (n, c) = g.shape();
                    if self.requires_grad(*beta) {
                        send(&mut grads, *beta, column_sums(&g));
                    }
                    if self.requires_grad(*gamma) {
                        send(&mut grads, *gamma, column_sums(&g.hadamard(normalized)));
                    }
                    if self.requires_grad(*input) {
                        let vg = self.value(*gamma);
                        let dxhat = Mat::from_fn(n, c, |i, j| g[(i, j)] * vg[(0, j)]);
                        let sum_d = column_sums(&dxhat);
                        let sum_dx = column_sums(&dxhat.hadamard(normalized));
                        let nf = n as f64;
                        let gx = Mat::from_fn(n, c, |i, j| {
                            inv_std[j] / nf
                                * (nf * dxhat[(i, j)] - sum_d[(0, j)] - normalized[(i, j)] * sum_dx[(0, j)])
                        });
                        send(&mut grads, *input, gx);
                    }
                }
                Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                    let scale = g.item() / labels.len() as f64;
                    let mut gl = probs.clone();
                    for (i, &l) in labels.iter().enumerate() {
                        gl[(i, l)] -= 1.0;
                    }
                    send(&mut grads, *logits, gl.scale(scale));
                }
                Op::SumSquares(a) => {
                    let s = 2.0 * g.item();
                    send(&mut grads, *a, self.value(*a).scale(s));
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    send(&mut grads, *a, Mat::filled(r, c, g.item()));
                }
            }
        }

        for node in &self.nodes {
            if let Op::Param(name) = &node.op {
                if !out.contains(name) {
                    out.insert(name.clone(), Mat::zeros(node.value.rows(), node.value.cols()));
                }
            }
        }
        Ok(out)
    }
}

fn column_sums(m: &Mat) -> Mat {
    let mut out = Mat::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, v) in out.row_mut(0).iter_mut().zip(m.row(i)) {
            *o += v;
        }
    }
    out
}
