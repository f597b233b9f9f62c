//! Functional maps between a shape's truncated spectrum and a canonical
//! domain, under the convention `α′ = C·α` with `C` of shape
//! `k_canon × k_local`.

use alloc::vec::Vec;

use super::average::AverageShape;
use super::voxel::VoxelBasis;
use crate::linalg::Mat;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FunctionalMap(Mat);

impl FunctionalMap {
    pub fn new(c: Mat) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::InvalidArgument("functional map has non-finite entries".into()));
        }
        Ok(Self(c))
    }

    pub fn k_canon(&self) -> usize {
        self.0.rows()
    }

    pub fn k_local(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }
}

/// `C_pre = B̄_vᵀ · B_v[:, ..k_local]`.
pub fn precompute_fmap(bv: &VoxelBasis, avg: &AverageShape, k_local: usize) -> Result<FunctionalMap> {
    if bv.resolution() != avg.resolution() {
        return Err(Error::DimensionMismatch {
            what: "voxel resolution",
            expected: avg.resolution(),
            found: bv.resolution(),
        });
    }
    precompute_fmap_from_values(bv.values(), avg, k_local)
}

/// [`precompute_fmap`] on a raw `R³ × m` voxel matrix.
pub fn precompute_fmap_from_values(values: &Mat, avg: &AverageShape, k_local: usize) -> Result<FunctionalMap> {
    if values.rows() != avg.values().rows() {
        return Err(Error::DimensionMismatch {
            what: "voxel grid rows",
            expected: avg.values().rows(),
            found: values.rows(),
        });
    }
    if k_local > values.cols() {
        return Err(Error::DimensionMismatch {
            what: "local basis count",
            expected: k_local,
            found: values.cols(),
        });
    }
    FunctionalMap::new(avg.values().t_matmul(&values.slice_cols(0, k_local)))
}

/// Block-stacked `[a₁B̄₁ … aₙB̄ₙ]ᵀ B_v` for a one-hot assignment `a`.
pub fn precompute_fmap_multi(
    bv: &VoxelBasis,
    averages: &[AverageShape],
    assignment: &[u8],
    k_local: usize,
) -> Result<FunctionalMap> {
    if assignment.len() != averages.len() {
        return Err(Error::DimensionMismatch {
            what: "assignment length",
            expected: averages.len(),
            found: assignment.len(),
        });
    }
    if let Some(i) = assignment.iter().position(|&a| a > 1) {
        return Err(Error::BadAssignment(i));
    }
    let ones = assignment.iter().filter(|&&a| a == 1).count();
    if ones != 1 {
        return Err(Error::BadAssignment(ones));
    }
    let mut blocks: Vec<Mat> = Vec::with_capacity(averages.len());
    for (avg, &a) in averages.iter().zip(assignment) {
        if a == 1 {
            blocks.push(precompute_fmap(bv, avg, k_local)?.into_inner());
        } else {
            blocks.push(Mat::zeros(avg.k_canon(), k_local));
        }
    }
    let mut out = blocks.remove(0);
    for b in &blocks {
        out = out.vstack(b);
    }
    FunctionalMap::new(out)
}

/// `α′ = [C·α[..k_local]; α[k_local..]]`: the first `k_local` coefficients
/// are mapped into the canonical domain, the rest pass through.
pub fn apply_fmap(c: &Mat, alpha: &Mat) -> Result<Mat> {
    let k_local = c.cols();
    if alpha.rows() < k_local {
        return Err(Error::DimensionMismatch {
            what: "coefficients for functional map",
            expected: k_local,
            found: alpha.rows(),
        });
    }
    let head = c.matmul(&alpha.slice_rows(0, k_local));
    Ok(head.vstack(&alpha.slice_rows(k_local, alpha.rows())))
}

/// `α̃ = [Cᵀ·α̃′[..k_canon]; α̃′[k_canon..]]`, the inverse of [`apply_fmap`]
/// under the transpose approximation.
pub fn apply_fmap_inverse(c: &Mat, alpha_canon: &Mat) -> Result<Mat> {
    let k_canon = c.rows();
    if alpha_canon.rows() < k_canon {
        return Err(Error::DimensionMismatch {
            what: "canonical coefficients",
            expected: k_canon,
            found: alpha_canon.rows(),
        });
    }
    let head = c.t_matmul(&alpha_canon.slice_rows(0, k_canon));
    Ok(head.vstack(&alpha_canon.slice_rows(k_canon, alpha_canon.rows())))
}

pub use crate::autodiff::spectn_losses;
