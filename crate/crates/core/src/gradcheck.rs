//! Central finite-difference verification of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::{Tape, TensorMap};
use crate::network::{Mode, Model};
use crate::rng::SeededRng;
use crate::train::{record_objective, FmapMode, Sample};
use crate::Result;

/// Denominator floor of [`relative_error`]: below it, differences are
/// judged in absolute terms. Central differences of an O(1) loss at step
/// 1e-5 carry roundoff near 1e-10, so exactly-zero gradients (a bias
/// feeding batch norm) need a floor well above that.
pub const REL_FLOOR: f64 = 1e-5;

/// `|a − b| / max(|a|, |b|, REL_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    /// Flat index of the worst entry.
    pub worst_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> usize {
        self.tensors.iter().map(|t| t.entries).sum()
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error() < tolerance
    }
}

/// Errors above this at the requested step are re-measured at smaller steps.
const REFINE_ABOVE: f64 = 1e-6;

/// Compares `analytic` against central differences of `loss` for every
/// entry of every tensor in `params`.
///
/// Piecewise-linear layers make the loss non-differentiable on a null set;
/// a central difference whose stencil straddles such a kink is wrong no
/// matter how good the gradient is. Entries that disagree at `step` are
/// therefore re-measured at `step / 10` and `step / 100`, and the best
/// agreement is kept. A wrong gradient disagrees at every step.
pub fn check_gradients(
    params: &TensorMap,
    analytic: &TensorMap,
    step: f64,
    mut loss: impl FnMut(&TensorMap) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut work = params.clone();
    let mut tensors = Vec::with_capacity(params.len());
    for (name, value) in params.iter() {
        let grad = analytic.require(name)?;
        let mut check = TensorCheck {
            name: name.clone(),
            entries: value.len(),
            max_rel_error: 0.0,
            worst_index: 0,
        };
        for k in 0..value.len() {
            let orig = value.as_slice()[k];
            let mut err = f64::INFINITY;
            let mut h = step;
            for _ in 0..3 {
                work.get_mut(name).unwrap().as_mut_slice()[k] = orig + h;
                let plus = loss(&work)?;
                work.get_mut(name).unwrap().as_mut_slice()[k] = orig - h;
                let minus = loss(&work)?;
                work.get_mut(name).unwrap().as_mut_slice()[k] = orig;
                err = err.min(relative_error(grad.as_slice()[k], (plus - minus) / (2.0 * h)));
                if err <= REFINE_ABOVE {
                    break;
                }
                h /= 10.0;
            }
            if err > check.max_rel_error {
                check.max_rel_error = err;
                check.worst_index = k;
            }
        }
        tensors.push(check);
    }
    Ok(GradCheckReport { tensors })
}

/// Adds seeded Gaussian noise of scale `scale` to every parameter, so that
/// zero-initialized tensors (such as the SpecTN output layer) carry
/// nonzero gradients into the layers before them.
pub fn perturb_params(model: &mut Model, scale: f64, seed: u64) {
    let mut rng = SeededRng::new(seed);
    for (_, m) in model.params_mut().iter_mut() {
        m.as_mut_slice().iter_mut().for_each(|v| *v += scale * rng.normal());
    }
}

/// End-to-end check of the training objective (train mode with a fixed
/// dropout mask) with respect to every model parameter.
pub fn check_model(
    model: &Model,
    sample: &Sample,
    fmap: FmapMode,
    ortho_weight: f64,
    seed: u64,
    step: f64,
) -> Result<GradCheckReport> {
    let mode = Mode::Train { seed };
    let mut tape = Tape::new();
    let (_, loss) = record_objective(model, &mut tape, sample, fmap, ortho_weight, mode)?;
    let analytic = tape.backward(loss)?;
    let mut probe = model.clone();
    check_gradients(model.params(), &analytic, step, |p| {
        *probe.params_mut() = p.clone();
        let mut t = Tape::new();
        let (_, l) = record_objective(&probe, &mut t, sample, fmap, ortho_weight, mode)?;
        Ok(t.value(l).item())
    })
}
