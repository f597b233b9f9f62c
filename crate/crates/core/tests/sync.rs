//! Voxelization, average shapes, functional maps and SpecTN.

mod common;

use common::{random_cloud, random_mat};
use nalgebra::DMatrix;
use sscnn_core::autodiff::{spectn_losses, TensorMap};
use sscnn_core::eigen::{eigendecompose, EigenOptions, SpectralBasis};
use sscnn_core::graph::{laplacian, PointCloud, WeightedGraph};
use sscnn_core::pipeline::shape_basis;
use sscnn_core::rng::SeededRng;
use sscnn_core::sync::*;
use sscnn_core::{Error, Mat};

fn opts() -> EigenOptions {
    EigenOptions::default()
}

fn centre(i: usize, r: usize) -> f64 {
    (i as f64 + 0.5) / r as f64
}

/// Voxel centres of a solid ellipsoid, in ascending voxel order.
fn blob(r: usize, radii: [f64; 3]) -> PointCloud {
    let mut pts = Vec::new();
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                let p = [centre(x, r), centre(y, r), centre(z, r)];
                if (0..3).map(|a| ((p[a] - 0.5) / radii[a]).powi(2)).sum::<f64>() <= 1.0 {
                    pts.push(p);
                }
            }
        }
    }
    PointCloud::new(pts).unwrap()
}

/// Eigenbasis of the shape's own 6-connected voxel graph, one vertex per
/// occupied voxel.
fn voxel_graph_basis(pc: &PointCloud, r: usize, m: usize) -> SpectralBasis {
    let vg = VoxelGraph::from_point_cloud(pc, r).unwrap();
    let cells: Vec<usize> = voxel_assignment(pc, r).unwrap();
    let local = |v: usize| cells.iter().position(|&c| c == v).unwrap();
    let edges: Vec<(usize, usize, f64)> = vg
        .adjacency()
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| i < j)
        .map(|(i, j, w)| (local(i), local(j), w))
        .collect();
    let g = WeightedGraph::from_edges(pc.len(), &edges).unwrap();
    eigendecompose(&laplacian(&g).unwrap(), m, &opts()).unwrap()
}

fn qr_orthonormal(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    let a = DMatrix::from_fn(rows, cols, |_, _| rng.normal());
    let q = a.qr().q();
    Mat::from_fn(rows, cols, |i, j| q[(i, j)])
}

#[test]
fn scatter_without_collisions_is_exact() {
    let r = 4;
    let pc = PointCloud::new(vec![[0.1, 0.1, 0.1], [0.9, 0.1, 0.6], [0.4, 0.7, 0.3]]).unwrap();
    let b = SpectralBasis::new(vec![0.0, 0.5], Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
    let vb = voxelize_bases(&pc, &b, r).unwrap();
    for (i, p) in pc.points().iter().enumerate() {
        let v = voxel_index(p, r).unwrap();
        assert_eq!(vb.values().row(v), b.vectors().row(i));
        assert_eq!(vb.counts()[v], 1);
    }
    assert_eq!(vb.counts().iter().sum::<u32>(), 3);
    assert_eq!(vb.values().rows(), 64);
}

#[test]
fn colliding_vertices_are_averaged() {
    let pc = PointCloud::new(vec![[0.1, 0.1, 0.1], [0.2, 0.15, 0.05]]).unwrap();
    let b = SpectralBasis::new(vec![0.0, 1.0], Mat::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0])).unwrap();
    let vb = voxelize_bases(&pc, &b, 2).unwrap();
    assert_eq!(vb.values().row(0), &[2.0, 1.0]);
    assert_eq!(vb.counts()[0], 2);
}

#[test]
fn occupancy_matches_histogram_oracle() {
    let r = 32;
    let pc = random_cloud(800, 3);
    let b = shape_basis(&pc, 6, 5, &opts()).unwrap();
    let vb = voxelize_bases(&pc, &b, r).unwrap();
    let mut hist = vec![0u32; r * r * r];
    for p in pc.points() {
        let [x, y, z] = [0, 1, 2].map(|a| ((p[a] * r as f64).floor() as usize).min(r - 1));
        hist[(x * r + y) * r + z] += 1;
    }
    assert_eq!(vb.counts(), &hist[..]);
    assert_eq!(vb.counts().iter().sum::<u32>(), 800);
    for (v, &c) in hist.iter().enumerate() {
        if c == 0 {
            assert!(vb.values().row(v).iter().all(|&x| x == 0.0));
        }
    }
}

#[test]
fn points_outside_the_cube_are_rejected() {
    let pc = PointCloud::new(vec![[0.5, 0.5, 0.5], [1.2, 0.0, 0.0]]).unwrap();
    let b = SpectralBasis::new(vec![0.0], Mat::from_vec(2, 1, vec![1.0, 1.0])).unwrap();
    assert_eq!(voxelize_bases(&pc, &b, 4).unwrap_err(), Error::OutOfBounds(1));
}

#[test]
fn average_of_one_shape_is_that_shape() {
    let pc = blob(8, [0.4, 0.3, 0.35]);
    let vg = VoxelGraph::from_point_cloud(&pc, 8).unwrap();
    let avg = build_average_shape(&[vg.clone()], 10, &opts()).unwrap();
    assert_eq!(avg.weights(), vg.adjacency());
    assert!(avg.weights().is_symmetric());
}

#[test]
fn disjoint_shapes_average_to_half_weights() {
    let r = 8;
    let left = PointCloud::new((0..3).flat_map(|x| (0..3).map(move |y| [centre(x, r), centre(y, r), centre(1, r)])).collect()).unwrap();
    let right = PointCloud::new((5..8).flat_map(|x| (4..7).map(move |z| [centre(x, r), centre(6, r), centre(z, r)])).collect()).unwrap();
    let (a, b) = (VoxelGraph::from_point_cloud(&left, r).unwrap(), VoxelGraph::from_point_cloud(&right, r).unwrap());
    let avg = build_average_shape(&[a.clone(), b.clone()], 4, &opts()).unwrap();
    let dense = avg.weights().to_dense();
    let expected = a.adjacency().to_dense().add(&b.adjacency().to_dense()).scale(0.5);
    assert_eq!(dense, expected);
    let union: Vec<usize> = (0..r * r * r).filter(|&v| a.occupancy()[v] || b.occupancy()[v]).collect();
    assert_eq!(avg.support(), &union[..]);
    assert!(matches!(build_average_shape(&[], 4, &opts()), Err(Error::EmptyOccupancy)));
}

#[test]
fn identical_shapes_share_the_single_shape_basis() {
    let vg = VoxelGraph::from_point_cloud(&blob(8, [0.42, 0.3, 0.36]), 8).unwrap();
    let one = build_average_shape(&[vg.clone()], 12, &opts()).unwrap();
    let three = build_average_shape(&[vg.clone(), vg.clone(), vg], 12, &opts()).unwrap();
    let proj = |m: &Mat| m.matmul_t(m);
    assert!(proj(one.values()).sub(&proj(three.values())).frobenius_norm() < 1e-8);
}

#[test]
fn self_map_is_identity_block() {
    let r = 8;
    let pc = blob(r, [0.45, 0.33, 0.38]);
    let vg = VoxelGraph::from_point_cloud(&pc, r).unwrap();
    let avg = build_average_shape(&[vg], 20, &opts()).unwrap();
    let vb = voxelize_bases(&pc, &voxel_graph_basis(&pc, r, 8), r).unwrap();
    let c = precompute_fmap(&vb, &avg, 8).unwrap();
    assert_eq!((c.k_canon(), c.k_local()), (20, 8));
    let m = c.matrix();
    for i in 0..20 {
        for j in 0..8 {
            let e = if i == j { 1.0 } else { 0.0 };
            assert!((m[(i, j)].abs() - e).abs() < 1e-8, "C[{i},{j}] = {}", m[(i, j)]);
        }
    }
}

#[test]
fn precomputed_map_is_a_product() {
    let r = 8;
    let pc = blob(r, [0.45, 0.33, 0.38]);
    let avg = build_average_shape(&[VoxelGraph::from_point_cloud(&pc, r).unwrap()], 10, &opts()).unwrap();
    let zero = VoxelBasis::from_parts(r, Mat::zeros(512, 4), vec![0; 512]).unwrap();
    assert_eq!(precompute_fmap(&zero, &avg, 4).unwrap().matrix().max_abs(), 0.0);

    let mut rng = SeededRng::new(5);
    let bv = random_mat(512, 6, &mut rng);
    let got = precompute_fmap_from_values(&bv, &avg, 6).unwrap();
    let oracle = DMatrix::from_fn(512, 10, |i, j| avg.values()[(i, j)]).transpose() * DMatrix::from_fn(512, 6, |i, j| bv[(i, j)]);
    for i in 0..10 {
        for j in 0..6 {
            assert!((got.matrix()[(i, j)] - oracle[(i, j)]).abs() < 1e-12);
        }
    }
    // Linear in B_v.
    let bw = random_mat(512, 6, &mut rng);
    let sum = precompute_fmap_from_values(&bv.scale(2.0).add(&bw), &avg, 6).unwrap();
    let parts = got.matrix().scale(2.0).add(precompute_fmap_from_values(&bw, &avg, 6).unwrap().matrix());
    assert!(sum.matrix().sub(&parts).max_abs() < 1e-12);
    let other = VoxelBasis::from_parts(4, Mat::zeros(64, 2), vec![0; 64]).unwrap();
    assert!(precompute_fmap(&other, &avg, 2).is_err());
}

fn three_averages(r: usize) -> Vec<AverageShape> {
    [[0.45, 0.33, 0.38], [0.25, 0.45, 0.3], [0.3, 0.3, 0.45]]
        .iter()
        .map(|&rad| build_average_shape(&[VoxelGraph::from_point_cloud(&blob(r, rad), r).unwrap()], 6, &opts()).unwrap())
        .collect()
}

#[test]
fn block_maps_follow_the_assignment() {
    let r = 8;
    let avgs = three_averages(r);
    let mut rng = SeededRng::new(6);
    let bv = VoxelBasis::from_parts(r, random_mat(512, 4, &mut rng), vec![1; 512]).unwrap();
    let single = precompute_fmap_multi(&bv, &avgs[..1], &[1], 4).unwrap();
    assert_eq!(single, precompute_fmap(&bv, &avgs[0], 4).unwrap());
    for k in 0..3 {
        let mut a = vec![0u8; 3];
        a[k] = 1;
        let c = precompute_fmap_multi(&bv, &avgs, &a, 4).unwrap();
        assert_eq!(c.k_canon(), 18);
        // Explicit [a₁B̄₁ a₂B̄₂ a₃B̄₃]ᵀ B_v.
        let stacked: Vec<Mat> = avgs.iter().zip(&a).map(|(g, &w)| g.values().scale(w as f64)).collect();
        let big = Mat::hstack(&stacked.iter().collect::<Vec<_>>());
        assert!(c.matrix().sub(&big.t_matmul(bv.values())).max_abs() < 1e-12);
        for b in 0..3 {
            let block = c.matrix().slice_rows(6 * b, 6 * b + 6);
            assert_eq!(block.max_abs() > 0.0, b == k);
        }
    }
    assert!(matches!(precompute_fmap_multi(&bv, &avgs, &[1, 1, 0], 4), Err(Error::BadAssignment(_))));
    assert!(matches!(precompute_fmap_multi(&bv, &avgs, &[0, 0, 0], 4), Err(Error::BadAssignment(_))));
    assert!(matches!(precompute_fmap_multi(&bv, &avgs, &[0, 2, 0], 4), Err(Error::BadAssignment(_))));
}

#[test]
fn assignment_picks_the_closest_occupancy() {
    let r = 8;
    let avgs = three_averages(r);
    for (k, rad) in [[0.45, 0.33, 0.38], [0.25, 0.45, 0.3], [0.3, 0.3, 0.45]].iter().enumerate() {
        let mut expect = vec![0u8; 3];
        expect[k] = 1;
        assert_eq!(assign_average(&blob(r, *rad), &avgs).unwrap(), expect);
    }
    for seed in 0..10 {
        let pc = random_cloud(150, seed);
        assert_eq!(assign_average(&pc, &avgs[1..2]).unwrap(), vec![1]);
        let occ = occupancy_grid(&pc, r).unwrap();
        let d: Vec<usize> = avgs
            .iter()
            .map(|a| occ.iter().zip(a.thresholded_occupancy()).filter(|(x, y)| **x != *y).count())
            .collect();
        let best = (0..3).fold(0, |b, i| if d[i] < d[b] { i } else { b });
        let got = assign_average(&pc, &avgs).unwrap();
        assert_eq!(got.iter().position(|&x| x == 1), Some(best));
    }
}

fn tiny_spectn() -> SpecTnConfig {
    SpecTnConfig {
        resolution: 8,
        k_local: 4,
        k_canon: 6,
        conv1: 2,
        conv2: 3,
        hidden: 5,
    }
}

#[test]
fn untrained_spectn_predicts_zero_and_is_deterministic() {
    let cfg = tiny_spectn();
    let mut params = TensorMap::new();
    cfg.init_params(&mut SeededRng::new(1), &mut params).unwrap();
    let mut rng = SeededRng::new(2);
    let input = random_mat(512, 4, &mut rng);
    assert_eq!(cfg.forward(&params, &input).unwrap().matrix().max_abs(), 0.0);
    for (_, m) in params.iter_mut() {
        m.as_mut_slice().iter_mut().for_each(|v| *v += 0.1 * rng.normal());
    }
    let a = cfg.forward(&params, &input).unwrap();
    assert_eq!(a, cfg.forward(&params, &input).unwrap());
    assert!(a.matrix().max_abs() > 0.0);
    assert!(cfg.forward(&params, &random_mat(511, 4, &mut rng)).is_err());
}

#[test]
fn map_application_contracts() {
    let mut rng = SeededRng::new(8);
    let alpha = random_mat(10, 3, &mut rng);
    let mut pad = Mat::zeros(7, 4);
    for i in 0..4 {
        pad[(i, i)] = 1.0;
    }
    let up = apply_fmap(&pad, &alpha).unwrap();
    assert_eq!(up.slice_rows(0, 4), alpha.slice_rows(0, 4));
    assert_eq!(up.slice_rows(4, 7).max_abs(), 0.0);
    assert_eq!(up.slice_rows(7, 13), alpha.slice_rows(4, 10));
    assert_eq!(apply_fmap_inverse(&pad, &up).unwrap(), alpha);
    assert_eq!(apply_fmap(&Mat::zeros(7, 4), &alpha).unwrap().slice_rows(0, 7).max_abs(), 0.0);

    let c = qr_orthonormal(9, 5, &mut rng);
    let a = random_mat(12, 2, &mut rng);
    let mapped = apply_fmap(&c, &a).unwrap();
    let norm = |m: &Mat| m.frobenius_norm();
    assert!((norm(&mapped.slice_rows(0, 9)) - norm(&a.slice_rows(0, 5))).abs() < 1e-10);
    let back = apply_fmap_inverse(&c, &mapped).unwrap();
    assert!(back.sub(&a).max_abs() < 1e-12);
    // Coefficients past k_local are untouched in both directions.
    assert_eq!(back.slice_rows(5, 12), a.slice_rows(5, 12));
    assert!(apply_fmap(&c, &random_mat(4, 1, &mut rng)).is_err());
}

#[test]
fn loss_values_match_frobenius_oracle() {
    let mut rng = SeededRng::new(9);
    let c = random_mat(2, 3, &mut rng);
    let cp = random_mat(2, 3, &mut rng);
    let (fit, ortho) = spectn_losses(&c, &cp).unwrap();
    let (a, b) = (DMatrix::from_fn(2, 3, |i, j| c[(i, j)]), DMatrix::from_fn(2, 3, |i, j| cp[(i, j)]));
    assert!((fit - (&a - &b).norm_squared()).abs() < 1e-12);
    assert!((ortho - (&a * a.transpose() - DMatrix::identity(2, 2)).norm_squared()).abs() < 1e-12);
    assert_eq!(spectn_losses(&c, &c).unwrap().0, 0.0);
    let rows = qr_orthonormal(3, 2, &mut rng).transpose();
    assert!(spectn_losses(&rows, &rows).unwrap().1 < 1e-24);
    assert!(spectn_losses(&c, &random_mat(3, 2, &mut rng)).is_err());
}
