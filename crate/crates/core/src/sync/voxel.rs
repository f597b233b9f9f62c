//! Volumetric reparameterization: per-vertex basis values scattered onto a
//! regular grid over the unit cube.

use alloc::vec;
use alloc::vec::Vec;

use crate::eigen::SpectralBasis;
use crate::graph::{Point3, PointCloud};
use crate::linalg::{self, Mat};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Linear index `(x·R + y)·R + z` of the voxel holding `p`. The upper face
/// of the cube belongs to the last voxel on each axis.
pub fn voxel_index(p: &Point3, resolution: usize) -> Option<usize> {
    let mut idx = [0usize; 3];
    for (a, c) in p.iter().enumerate() {
        if !(*c >= 0.0 && *c <= 1.0) {
            return None;
        }
        idx[a] = ((c * resolution as f64) as usize).min(resolution - 1);
    }
    Some((idx[0] * resolution + idx[1]) * resolution + idx[2])
}

fn check_resolution(resolution: usize) -> Result<()> {
    if resolution < 2 {
        return Err(Error::InvalidArgument(alloc::format!(
            "voxel resolution must be ≥ 2, got {resolution}"
        )));
    }
    Ok(())
}

/// Voxel of every point; `OutOfBounds(i)` names the first point outside
/// `[0, 1]³`.
pub fn voxel_assignment(pc: &PointCloud, resolution: usize) -> Result<Vec<usize>> {
    check_resolution(resolution)?;
    pc.points()
        .iter()
        .enumerate()
        .map(|(i, p)| voxel_index(p, resolution).ok_or(Error::OutOfBounds(i)))
        .collect()
}

pub fn occupancy_grid(pc: &PointCloud, resolution: usize) -> Result<Vec<bool>> {
    let mut occ = vec![false; resolution * resolution * resolution];
    for v in voxel_assignment(pc, resolution)? {
        occ[v] = true;
    }
    Ok(occ)
}

/// Uniform scale and translation placing the cloud's bounding box at the
/// origin corner of the unit cube, longest side spanning `[0, 1]`.
pub fn normalize_to_unit_cube(pc: &PointCloud) -> Result<PointCloud> {
    let (lo, hi) = pc.bounds();
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if !(extent > 0.0) {
        return Err(Error::InvalidPointCloud("cloud has zero extent".into()));
    }
    let pts: Vec<Point3> = pc
        .points()
        .iter()
        .map(|p| {
            let mut q = [0.0; 3];
            for a in 0..3 {
                q[a] = ((p[a] - lo[a]) / extent).clamp(0.0, 1.0);
            }
            q
        })
        .collect();
    let mut out = PointCloud::new(pts)?;
    if let Some(l) = pc.labels() {
        out = out.with_labels(l.to_vec())?;
    }
    if let Some(n) = pc.normals() {
        out = out.with_normals(n.to_vec())?;
    }
    Ok(out)
}

/// Basis functions sampled on an `R³` grid (`R³ × m`, zero rows where no
/// vertex falls).
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelBasis {
    resolution: usize,
    values: Mat,
    counts: Vec<u32>,
}

impl VoxelBasis {
    pub fn from_parts(resolution: usize, values: Mat, counts: Vec<u32>) -> Result<Self> {
        let cells = resolution * resolution * resolution;
        if values.rows() != cells || counts.len() != cells {
            return Err(Error::DimensionMismatch {
                what: "voxel grid rows",
                expected: cells,
                found: values.rows(),
            });
        }
        Ok(Self {
            resolution,
            values,
            counts,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn m(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Mat {
        &self.values
    }

    /// Number of vertices that landed in each voxel.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.counts.iter().map(|&c| c > 0).collect()
    }

    pub fn truncated(&self, m: usize) -> VoxelBasis {
        VoxelBasis {
            resolution: self.resolution,
            values: self.values.slice_cols(0, m.min(self.m())),
            counts: self.counts.clone(),
        }
    }

    /// Copy with every nonzero column rescaled to unit norm. Averaging in
    /// [`voxelize_bases`] shrinks columns by an amount that depends on the
    /// sampling density; this undoes it before maps are compared.
    pub fn normalized_columns(&self) -> VoxelBasis {
        let mut values = self.values.clone();
        for j in 0..values.cols() {
            let col = values.column(j);
            let nrm = linalg::norm(&col);
            if nrm > 0.0 {
                let scaled: Vec<f64> = col.iter().map(|v| v / nrm).collect();
                values.set_column(j, &scaled);
            }
        }
        VoxelBasis {
            resolution: self.resolution,
            values,
            counts: self.counts.clone(),
        }
    }
}

/// Scatters each vertex's basis row into its voxel. Voxels hit by several
/// vertices get the mean of their rows.
pub fn voxelize_bases(pc: &PointCloud, basis: &SpectralBasis, resolution: usize) -> Result<VoxelBasis> {
    if pc.len() != basis.n() {
        return Err(Error::DimensionMismatch {
            what: "basis rows vs points",
            expected: pc.len(),
            found: basis.n(),
        });
    }
    let assign = voxel_assignment(pc, resolution)?;
    let cells = resolution * resolution * resolution;
    let m = basis.m();
    let mut values = Mat::zeros(cells, m);
    let mut counts = vec![0u32; cells];
    let b = basis.vectors();
    for (i, &v) in assign.iter().enumerate() {
        counts[v] += 1;
        for (dst, src) in values.row_mut(v).iter_mut().zip(b.row(i)) {
            *dst += src;
        }
    }
    for (v, &c) in counts.iter().enumerate() {
        if c > 1 {
            let inv = 1.0 / c as f64;
            values.row_mut(v).iter_mut().for_each(|x| *x *= inv);
        }
    }
    VoxelBasis::from_parts(resolution, values, counts)
}

/// Occupancy of one shape together with its voxel adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelGraph {
    resolution: usize,
    occupancy: Vec<bool>,
    adjacency: CsrMatrix,
}

impl VoxelGraph {
    /// Unit-weight 6-connectivity between occupied voxels.
    pub fn from_occupancy(occupancy: Vec<bool>, resolution: usize) -> Result<Self> {
        check_resolution(resolution)?;
        let cells = resolution * resolution * resolution;
        if occupancy.len() != cells {
            return Err(Error::DimensionMismatch {
                what: "occupancy length",
                expected: cells,
                found: occupancy.len(),
            });
        }
        let r = resolution;
        let mut triplets = Vec::new();
        for x in 0..r {
            for y in 0..r {
                for z in 0..r {
                    let i = (x * r + y) * r + z;
                    if !occupancy[i] {
                        continue;
                    }
                    let mut link = |j: usize| {
                        if occupancy[j] {
                            triplets.push((i, j, 1.0));
                            triplets.push((j, i, 1.0));
                        }
                    };
                    if x + 1 < r {
                        link(i + r * r);
                    }
                    if y + 1 < r {
                        link(i + r);
                    }
                    if z + 1 < r {
                        link(i + 1);
                    }
                }
            }
        }
        Ok(Self {
            resolution,
            occupancy,
            adjacency: CsrMatrix::from_triplets(cells, cells, &triplets),
        })
    }

    pub fn from_point_cloud(pc: &PointCloud, resolution: usize) -> Result<Self> {
        Self::from_occupancy(occupancy_grid(pc, resolution)?, resolution)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }
}
