//! Spectral synchronization across shapes.
//!
//! Each shape's eigenbasis is scattered onto a voxel grid
//! ([`voxelize_bases`]) so that bases of different shapes live in one
//! space. Averaging the voxel adjacencies of a collection gives a virtual
//! [`AverageShape`] whose eigenbasis is the canonical domain; projecting a
//! shape's voxel basis onto it yields an initial functional map, which the
//! [`SpecTnConfig`] regressor learns to predict.

mod average;
mod fmap;
mod spectn;
mod voxel;

pub use average::{
    assign_average, assign_average_with, build_average_shape, AverageShape, HammingOccupancy, OccupancyDistance,
};
pub use fmap::{
    apply_fmap, apply_fmap_inverse, precompute_fmap, precompute_fmap_from_values, precompute_fmap_multi, spectn_losses, FunctionalMap,
};
pub use spectn::{is_spectn_param, SpecTnConfig};
pub use voxel::{
    normalize_to_unit_cube, occupancy_grid, voxel_assignment, voxel_index, voxelize_bases, VoxelBasis, VoxelGraph,
};
