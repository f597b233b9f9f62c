//! The layered spectral network.
//!
//! Each block transforms its input to spectral coordinates, optionally
//! synchronizes them through a functional map, scales every coefficient by
//! a dilated kernel, transforms back and mixes channels with a 1×1
//! convolution followed by batch norm, ReLU and dropout.

mod config;
mod model;

pub use config::{describe, BnEval, parse_layer_table, HeadKind, LayerConfig, ModelConfig};
pub use model::{FmapInput, ForwardPass, Mode, Model};

use crate::graph::PointCloud;
use crate::linalg::Mat;

/// XYZ coordinates as a three-channel input signal.
pub fn coordinate_features(pc: &PointCloud) -> Mat {
    let pts = pc.points();
    Mat::from_fn(pts.len(), 3, |i, j| pts[i][j])
}
