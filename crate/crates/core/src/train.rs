//! Training loops: SpecTN pretraining against precomputed maps and joint
//! training of the full network.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Adam, AdamConfig, LossKind, LossSpec, Optimizer, Sgd, Tape, TensorMap, Var};
use crate::eigen::SpectralBasis;
use crate::linalg::Mat;
use crate::network::{FmapInput, ForwardPass, HeadKind, Mode, Model};
use crate::rng::SeededRng;
use crate::sync::is_spectn_param;
use crate::{Error, Result};

/// Supervision for one shape.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Per-point class ids (segmentation, keypoints).
    Labels(Vec<usize>),
    /// Per-point regression targets (normals).
    Values(Mat),
}

/// Everything the network needs about one training shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub basis: SpectralBasis,
    pub input: Mat,
    pub target: Target,
    /// Column-normalized voxel basis, `R³ × k_local` (SpecTN input).
    pub voxels: Option<Mat>,
    /// Precomputed functional map `k_canon × k_local`.
    pub c_pre: Option<Mat>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FmapMode {
    Identity,
    Precomputed,
    Learned,
}

impl FmapMode {
    pub fn name(self) -> &'static str {
        match self {
            FmapMode::Identity => "identity",
            FmapMode::Precomputed => "precomputed",
            FmapMode::Learned => "learned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [FmapMode::Identity, FmapMode::Precomputed, FmapMode::Learned]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimizerKind {
    Adam(AdamConfig),
    Sgd { lr: f64 },
}

impl OptimizerKind {
    fn build(self) -> alloc::boxed::Box<dyn Optimizer> {
        match self {
            OptimizerKind::Adam(c) => alloc::boxed::Box::new(Adam::new(c)),
            OptimizerKind::Sgd { lr } => alloc::boxed::Box::new(Sgd::new(lr)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Shapes whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Weight of the orthogonality penalty on SpecTN output.
    pub ortho_weight: f64,
    pub fmap: FmapMode,
    pub shuffle: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 1,
            optimizer: OptimizerKind::Adam(AdamConfig::default()),
            ortho_weight: 1e-2,
            fmap: FmapMode::Learned,
            shuffle: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Train,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Train => "train",
        }
    }
}

/// Mean loss of one epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
}

/// The functional-map input a sample provides under `mode`.
pub fn fmap_input(sample: &Sample, mode: FmapMode) -> Result<FmapInput<'_>> {
    let missing = |what: &str| Error::InvalidArgument(format!("sample has no {what} for fmap mode '{}'", mode.name()));
    Ok(match mode {
        FmapMode::Identity => FmapInput::Identity,
        FmapMode::Precomputed => FmapInput::Fixed(sample.c_pre.as_ref().ok_or_else(|| missing("precomputed map"))?),
        FmapMode::Learned => FmapInput::Learned(sample.voxels.as_ref().ok_or_else(|| missing("voxel basis"))?),
    })
}

/// Task loss for the model's head.
pub fn task_loss(tape: &mut Tape, head: Option<HeadKind>, output: Var, target: &Target) -> Result<Var> {
    match (head, target) {
        (Some(HeadKind::Normals), Target::Values(v)) | (None, Target::Values(v)) => tape.l2_loss(output, v),
        (Some(_), Target::Labels(l)) => tape.softmax_cross_entropy(output, l),
        _ => Err(Error::InvalidArgument("target kind does not match the model head".into())),
    }
}

/// Records forward pass plus objective (task loss and, with a learned map,
/// the weighted orthogonality penalty).
pub fn record_objective(
    model: &Model,
    tape: &mut Tape,
    sample: &Sample,
    fmap: FmapMode,
    ortho_weight: f64,
    mode: Mode,
) -> Result<(ForwardPass, Var)> {
    let pass = model.record(tape, &sample.basis, fmap_input(sample, fmap)?, &sample.input, mode)?;
    let task = task_loss(tape, model.config().head, pass.output, &sample.target)?;
    let loss = match (fmap, pass.fmap) {
        (FmapMode::Learned, Some(c)) if ortho_weight > 0.0 => {
            let ortho = tape.ortho_penalty(c)?;
            let kind = match sample.target {
                Target::Labels(_) => LossKind::SoftmaxCrossEntropy,
                Target::Values(_) => LossKind::L2,
            };
            tape.weighted_sum(&[
                (LossSpec::new(kind, 1.0)?, task),
                (LossSpec::new(LossKind::OrthoPenalty, ortho_weight)?, ortho),
            ])?
        }
        _ => task,
    };
    Ok((pass, loss))
}

fn epoch_order(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    if cfg.shuffle {
        SeededRng::new(SeededRng::derive_seed(cfg.seed, epoch as u64)).shuffle(&mut order);
    }
    order
}

fn check_config(data_len: usize, cfg: &TrainConfig) -> Result<()> {
    if data_len == 0 {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    LossSpec::new(LossKind::OrthoPenalty, cfg.ortho_weight)?;
    Ok(())
}

/// Trains every network parameter on `data` (SpecTN parameters only when
/// the map is learned), then re-estimates the batch-norm running averages
/// with [`recalibrate_batch_norm`]. Returns the mean training loss of each
/// epoch.
pub fn train(model: &mut Model, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<LossRecord>> {
    check_config(data.len(), cfg)?;
    let mut opt = cfg.optimizer.build();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = TensorMap::new();
            for &i in batch {
                let seed = SeededRng::derive_seed(cfg.seed ^ 0xD40F, (epoch * data.len() + i) as u64);
                let mut tape = Tape::new();
                let (pass, loss) =
                    record_objective(model, &mut tape, &data[i], cfg.fmap, cfg.ortho_weight, Mode::Train { seed })?;
                total += tape.value(loss).item();
                grads.accumulate(&tape.backward(loss)?);
                model.update_running_stats(&pass.bn_stats);
            }
            grads.scale(1.0 / batch.len() as f64);
            if cfg.fmap != FmapMode::Learned {
                let frozen: Vec<_> = grads.names().filter(|n| is_spectn_param(n)).cloned().collect();
                for n in frozen {
                    grads.remove(&n);
                }
            }
            opt.step(model.params_mut(), &grads)?;
            model.set_step(model.step() + 1);
        }
        history.push(LossRecord {
            epoch,
            phase: Phase::Train,
            loss: total / data.len() as f64,
        });
    }
    recalibrate_batch_norm(model, data, cfg.fmap)?;
    Ok(history)
}

/// Fits SpecTN to the precomputed maps: minimizes `‖C − C_pre‖²` plus
/// `ortho_weight·‖CᵀC − I‖²` per shape. Only SpecTN parameters change.
pub fn pretrain_spectn(model: &mut Model, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<LossRecord>> {
    check_config(data.len(), cfg)?;
    let spectn = model.config().spectn;
    if !model.config().uses_spectn() {
        return Err(Error::InvalidArgument("model has no SpecTN blocks".into()));
    }
    let mut opt = cfg.optimizer.build();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(data.len(), cfg, epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = TensorMap::new();
            for &i in batch {
                let (voxels, c_pre) = match (&data[i].voxels, &data[i].c_pre) {
                    (Some(v), Some(c)) => (v, c),
                    _ => return Err(Error::InvalidArgument("pretraining needs voxel bases and precomputed maps".into())),
                };
                let mut tape = Tape::new();
                let vars = tape.bind(&spectn.subset(model.params())?);
                let x = tape.constant(voxels.clone());
                let c = spectn.forward_on_tape(&mut tape, &vars, x)?;
                let fit = tape.spectn_pretrain_loss(c, c_pre)?;
                let loss = if cfg.ortho_weight > 0.0 {
                    let ortho = tape.ortho_penalty(c)?;
                    tape.weighted_sum(&[
                        (LossSpec::new(LossKind::SpectnPretrain, 1.0)?, fit),
                        (LossSpec::new(LossKind::OrthoPenalty, cfg.ortho_weight)?, ortho),
                    ])?
                } else {
                    fit
                };
                total += tape.value(loss).item();
                grads.accumulate(&tape.backward(loss)?);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.step(model.params_mut(), &grads)?;
        }
        history.push(LossRecord {
            epoch,
            phase: Phase::Pretrain,
            loss: total / data.len() as f64,
        });
    }
    Ok(history)
}

/// Replaces the batch-norm running averages with the mean per-shape
/// statistics of the current parameters over `data`. Momentum averages
/// trail the parameters during training; this pass removes the lag.
pub fn recalibrate_batch_norm(model: &mut Model, data: &[Sample], fmap: FmapMode) -> Result<()> {
    if data.is_empty() || !model.config().batch_norm {
        return Ok(());
    }
    let mut sums: Vec<(usize, Vec<f64>, Vec<f64>)> = Vec::new();
    for sample in data {
        let mut tape = Tape::new();
        let pass = model.record(&mut tape, &sample.basis, fmap_input(sample, fmap)?, &sample.input, Mode::Statistics)?;
        for (l, s) in pass.bn_stats {
            match sums.iter_mut().find(|e| e.0 == l) {
                Some(e) => {
                    e.1.iter_mut().zip(&s.mean).for_each(|(a, b)| *a += b);
                    e.2.iter_mut().zip(&s.var).for_each(|(a, b)| *a += b);
                }
                None => sums.push((l, s.mean, s.var)),
            }
        }
    }
    let k = data.len() as f64;
    for (l, mean, var) in sums {
        let mean: Vec<f64> = mean.into_iter().map(|v| v / k).collect();
        let var: Vec<f64> = var.into_iter().map(|v| v / k).collect();
        model.set_running_stats(l, &mean, &var)?;
    }
    Ok(())
}

/// Eval-mode network output for one sample.
pub fn predict_sample(model: &Model, sample: &Sample, fmap: FmapMode) -> Result<Mat> {
    model.predict(&sample.basis, fmap_input(sample, fmap)?, &sample.input)
}
