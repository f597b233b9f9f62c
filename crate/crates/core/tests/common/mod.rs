//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use sscnn_core::eigen::EigenOptions;
use sscnn_core::graph::PointCloud;
use sscnn_core::network::{HeadKind, ModelConfig};
use sscnn_core::pipeline;
use sscnn_core::rng::SeededRng;
use sscnn_core::sync::{build_average_shape, AverageShape};
use sscnn_core::synth::{synthetic_shape, SynthKind};
use sscnn_core::train::Sample;
use sscnn_core::Mat;

pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = SeededRng::new(seed);
    PointCloud::new((0..n).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect()).unwrap()
}

pub fn random_mat(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

/// A 30-point two-part shape with its sample for `config`, plus the
/// average (of three denser shapes) it was mapped against.
pub fn tiny_sample(config: &ModelConfig, m: usize, seed: u64) -> (Sample, AverageShape) {
    let shape = synthetic_shape(SynthKind::Ellipsoid, 30, seed).unwrap();
    let pc = &shape.cloud;
    let basis = pipeline::shape_basis(pc, 6, m, &EigenOptions::default()).unwrap();
    let dense: Vec<_> = (0..3)
        .map(|i| synthetic_shape(SynthKind::Ellipsoid, 400, seed + 100 + i).unwrap().cloud)
        .collect();
    let graphs = pipeline::voxel_graphs(&dense.iter().collect::<Vec<_>>(), config.spectn.resolution).unwrap();
    let avg = build_average_shape(&graphs, config.spectn.k_canon, &EigenOptions::default()).unwrap();
    let head = config.head.unwrap_or(HeadKind::Segmentation { classes: 2 });
    let target = pipeline::target_for(head, pc, Some(&shape.keypoints)).unwrap();
    let sample = pipeline::make_sample(pc, basis, config, target, Some(&avg)).unwrap();
    (sample, avg)
}
