//! Glue from a point cloud to a training [`Sample`].

use alloc::vec::Vec;

use crate::eigen::{self, EigenOptions, SpectralBasis};
use crate::graph::{self, PointCloud};
use crate::linalg::Mat;
use crate::network::{coordinate_features, HeadKind, ModelConfig};
use crate::sync::{self, AverageShape, VoxelGraph};
use crate::tasks;
use crate::train::{Sample, Target};
use crate::{Error, Result};

/// kNN graph, normalized Laplacian and its `m` smallest eigenpairs (`m` is
/// capped at the vertex count).
pub fn shape_basis(pc: &PointCloud, k: usize, m: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let g = graph::build_knn_graph(pc, k)?;
    let l = graph::laplacian(&g)?;
    eigen::eigendecompose(&l, m.min(pc.len()), opts)
}

/// The SpecTN input: the first `k_local` basis functions voxelized at
/// `resolution` with unit-norm columns.
pub fn voxel_input(pc: &PointCloud, basis: &SpectralBasis, k_local: usize, resolution: usize) -> Result<Mat> {
    if basis.m() < k_local {
        return Err(Error::DimensionMismatch {
            what: "basis size for SpecTN input",
            expected: k_local,
            found: basis.m(),
        });
    }
    let vb = sync::voxelize_bases(pc, &basis.truncated(k_local), resolution)?;
    Ok(vb.normalized_columns().values().clone())
}

/// `C_pre` of a shape against one average, from its column-normalized
/// voxel basis.
pub fn precomputed_map(voxels: &Mat, avg: &AverageShape) -> Result<Mat> {
    Ok(sync::precompute_fmap_from_values(voxels, avg, voxels.cols())?.into_inner())
}

/// Voxel graph of every cloud, for [`sync::build_average_shape`].
pub fn voxel_graphs(clouds: &[&PointCloud], resolution: usize) -> Result<Vec<VoxelGraph>> {
    clouds.iter().map(|pc| VoxelGraph::from_point_cloud(pc, resolution)).collect()
}

/// The supervision a head expects from a cloud; keypoint heads need the
/// keypoint indices.
pub fn target_for(head: HeadKind, pc: &PointCloud, keypoints: Option<&[usize]>) -> Result<Target> {
    match head {
        HeadKind::Segmentation { classes } => {
            let labels = pc
                .labels()
                .ok_or_else(|| Error::InvalidArgument("segmentation needs part labels".into()))?;
            if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
                return Err(Error::UnknownLabel(bad));
            }
            Ok(Target::Labels(labels.iter().map(|&l| l as usize).collect()))
        }
        HeadKind::Keypoint { .. } => {
            let kp = keypoints.ok_or_else(|| Error::InvalidArgument("keypoint task needs keypoint indices".into()))?;
            let labels = tasks::keypoint_labels(pc.len(), kp)?;
            Ok(Target::Labels(labels.into_iter().map(|l| l as usize).collect()))
        }
        HeadKind::Normals => {
            let n = pc
                .normals()
                .ok_or_else(|| Error::InvalidArgument("normal prediction needs normals".into()))?;
            Ok(Target::Values(Mat::from_fn(n.len(), 3, |i, j| n[i][j])))
        }
    }
}

/// Assembles a sample from a cloud already placed in the unit cube. The
/// voxel input is built when the model has SpecTN blocks; `C_pre` when an
/// average is given.
pub fn make_sample(
    pc: &PointCloud,
    basis: SpectralBasis,
    config: &ModelConfig,
    target: Target,
    average: Option<&AverageShape>,
) -> Result<Sample> {
    let (voxels, c_pre) = if config.uses_spectn() {
        let v = voxel_input(pc, &basis, config.spectn.k_local, config.spectn.resolution)?;
        let c = average.map(|a| precomputed_map(&v, a)).transpose()?;
        (Some(v), c)
    } else {
        (None, None)
    };
    Ok(Sample {
        basis,
        input: coordinate_features(pc),
        target,
        voxels,
        c_pre,
    })
}
