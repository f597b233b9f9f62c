//! Average shapes: the mean voxel adjacency of a collection and the
//! eigenbasis that serves as its canonical spectral domain.

use alloc::vec;
use alloc::vec::Vec;

use super::voxel::VoxelGraph;
use crate::eigen::{self, EigenOptions, SpectralBasis};
use crate::graph::{self, PointCloud, WeightedGraph};
use crate::linalg::Mat;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct AverageShape {
    resolution: usize,
    weights: CsrMatrix,
    occupancy: Vec<f64>,
    support: Vec<usize>,
    basis: SpectralBasis,
    values: Mat,
}

impl AverageShape {
    /// Rebuilds an average from its adjacency `W̄` and mean occupancy,
    /// recomputing the `k_canon` smallest eigenpairs of the voxel graph
    /// restricted to voxels with positive degree.
    pub fn from_parts(
        resolution: usize,
        weights: CsrMatrix,
        occupancy: Vec<f64>,
        k_canon: usize,
        opts: &EigenOptions,
    ) -> Result<Self> {
        let cells = resolution * resolution * resolution;
        if weights.n_rows() != cells || weights.n_cols() != cells || occupancy.len() != cells {
            return Err(Error::DimensionMismatch {
                what: "average grid size",
                expected: cells,
                found: weights.n_rows(),
            });
        }
        let support: Vec<usize> = (0..cells).filter(|&i| weights.row_sum(i) > 0.0).collect();
        if support.is_empty() {
            return Err(Error::EmptyOccupancy);
        }
        if k_canon == 0 || k_canon > support.len() {
            return Err(Error::TooFewPoints {
                have: support.len(),
                need: k_canon.max(1),
            });
        }
        let mut local = vec![usize::MAX; cells];
        for (li, &gi) in support.iter().enumerate() {
            local[gi] = li;
        }
        let edges: Vec<(usize, usize, f64)> = weights
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| i < j)
            .map(|(i, j, w)| (local[i], local[j], w))
            .collect();
        let g = WeightedGraph::from_edges(support.len(), &edges)?;
        let basis = eigen::eigendecompose(&graph::laplacian(&g)?, k_canon, opts)?;
        let mut values = Mat::zeros(cells, k_canon);
        for (li, &gi) in support.iter().enumerate() {
            values.row_mut(gi).copy_from_slice(basis.vectors().row(li));
        }
        Ok(Self {
            resolution,
            weights,
            occupancy,
            support,
            basis,
            values,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Mean adjacency `W̄_v` over the full grid.
    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    /// Fraction of source shapes occupying each voxel.
    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    /// Voxels with positive degree in `W̄_v`, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    /// Eigenbasis over the support voxels.
    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    /// `B̄_v`: the canonical basis on the full grid (`R³ × k_canon`).
    pub fn values(&self) -> &Mat {
        &self.values
    }

    pub fn k_canon(&self) -> usize {
        self.basis.m()
    }

    /// Occupancy thresholded at one half.
    pub fn thresholded_occupancy(&self) -> Vec<bool> {
        self.occupancy.iter().map(|&o| o >= 0.5).collect()
    }
}

/// Entrywise mean of the voxel adjacencies, with its eigenbasis truncated
/// to `k_canon`.
pub fn build_average_shape(shapes: &[VoxelGraph], k_canon: usize, opts: &EigenOptions) -> Result<AverageShape> {
    let first = shapes.first().ok_or(Error::EmptyOccupancy)?;
    let r = first.resolution();
    if let Some(s) = shapes.iter().find(|s| s.resolution() != r) {
        return Err(Error::DimensionMismatch {
            what: "voxel resolution",
            expected: r,
            found: s.resolution(),
        });
    }
    let cells = r * r * r;
    let inv = 1.0 / shapes.len() as f64;
    let mut triplets = Vec::new();
    let mut occupancy = vec![0.0; cells];
    for s in shapes {
        triplets.extend(s.adjacency().triplets());
        for (o, &b) in occupancy.iter_mut().zip(s.occupancy()) {
            if b {
                *o += inv;
            }
        }
    }
    let summed = CsrMatrix::from_triplets(cells, cells, &triplets);
    let mean: Vec<(usize, usize, f64)> = summed.triplets().into_iter().map(|(i, j, w)| (i, j, w * inv)).collect();
    AverageShape::from_parts(r, CsrMatrix::from_triplets(cells, cells, &mean), occupancy, k_canon, opts)
}

/// Global shape-to-average dissimilarity used to pick an average.
pub trait OccupancyDistance {
    fn distance(&self, occupancy: &[bool], average: &AverageShape) -> f64;
}

/// Number of voxels where the shape's occupancy disagrees with the
/// average's occupancy thresholded at ½.
#[derive(Clone, Copy, Debug, Default)]
pub struct HammingOccupancy;

impl OccupancyDistance for HammingOccupancy {
    fn distance(&self, occupancy: &[bool], average: &AverageShape) -> f64 {
        occupancy
            .iter()
            .zip(average.thresholded_occupancy())
            .filter(|(a, b)| **a != *b)
            .count() as f64
    }
}

/// One-hot assignment to the closest average (lowest index on ties).
pub fn assign_average(pc: &PointCloud, averages: &[AverageShape]) -> Result<Vec<u8>> {
    assign_average_with(pc, averages, &HammingOccupancy)
}

pub fn assign_average_with(
    pc: &PointCloud,
    averages: &[AverageShape],
    metric: &dyn OccupancyDistance,
) -> Result<Vec<u8>> {
    let first = averages.first().ok_or(Error::EmptyOccupancy)?;
    let occ = super::voxel::occupancy_grid(pc, first.resolution())?;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, avg) in averages.iter().enumerate() {
        if avg.resolution() != first.resolution() {
            return Err(Error::DimensionMismatch {
                what: "average resolution",
                expected: first.resolution(),
                found: avg.resolution(),
            });
        }
        let d = metric.distance(&occ, avg);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    let mut onehot = vec![0u8; averages.len()];
    onehot[best] = 1;
    Ok(onehot)
}
