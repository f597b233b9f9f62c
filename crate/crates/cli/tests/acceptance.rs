//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs as a plain binary (`harness = false`). The process fails when a
//! criterion fails that is not listed in `KNOWN_FAILURES`; known failures
//! are still printed as FAIL.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use sscnn::dataset;
use sscnn::formats;
use sscnn_core::autodiff::{spectn_losses, AdamConfig};
use sscnn_core::eigen::{eigendecompose, EigenOptions, SpectralBasis};
use sscnn_core::gradcheck::{check_model, perturb_params};
use sscnn_core::graph::{build_knn_graph, laplacian, PointCloud, WeightedGraph};
use sscnn_core::network::{HeadKind, Model, ModelConfig};
use sscnn_core::pipeline;
use sscnn_core::rng::SeededRng;
use sscnn_core::spectral::{
    backward_transform, forward_transform, kernel_multipliers, spatial_kernel_profile, KernelKind, KernelSpec,
    VertexSignal,
};
use sscnn_core::sync::{
    build_average_shape, precompute_fmap, precompute_fmap_from_values, voxel_assignment, voxelize_bases, AverageShape,
    SpecTnConfig, VoxelGraph,
};
use sscnn_core::synth::{synthetic_set, synthetic_shape, SynthKind, SyntheticShape};
use sscnn_core::tasks;
use sscnn_core::train::{predict_sample, pretrain_spectn, train, FmapMode, OptimizerKind, Sample, Target, TrainConfig};
use sscnn_core::Mat;

/// Sub-checks expected to fail; see the project notes for the analysis.
const KNOWN_FAILURES: &[&str] = &["6b"];

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn random_mat(rows: usize, cols: usize, rng: &mut SeededRng) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

fn random_cloud(n: usize, rng: &mut SeededRng) -> PointCloud {
    PointCloud::new((0..n).map(|_| [rng.uniform(), rng.uniform(), rng.uniform()]).collect()).unwrap()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn eigen_suite() -> Check {
    let mut rng = SeededRng::new(1);
    let (mut worst_val, mut worst_proj, mut range) = (0.0f64, 0.0f64, (f64::INFINITY, f64::NEG_INFINITY));
    for _ in 0..20 {
        let n = 20 + rng.below(41);
        let l = laplacian(&build_knn_graph(&random_cloud(n, &mut rng), 6).map_err(err)?).map_err(err)?;
        let ours = eigendecompose(&l, 10, &EigenOptions::iterative()).map_err(err)?;
        let eig = SymmetricEigen::new(to_na(&l.matrix().to_dense()));
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        range.0 = range.0.min(eig.eigenvalues[order[0]]);
        range.1 = range.1.max(eig.eigenvalues[order[n - 1]]);
        for (a, &i) in ours.eigenvalues().iter().zip(&order) {
            worst_val = worst_val.max((a - eig.eigenvalues[i]).abs());
        }
        let oracle = DMatrix::from_fn(n, 10, |r, c| eig.eigenvectors[(r, order[c])]);
        let b = to_na(ours.vectors());
        worst_proj = worst_proj.max((&b * b.transpose() - &oracle * oracle.transpose()).norm());
    }
    let detail = format!(
        "max |Δλ| {worst_val:.1e}, spectrum [{:.1e}, {:.6}], projector distance {worst_proj:.1e}",
        range.0, range.1
    );
    ensure(worst_val <= 1e-8, || detail.clone())?;
    ensure(range.0 >= -1e-10 && range.1 <= 2.0 + 1e-10, || detail.clone())?;
    ensure(worst_proj <= 1e-6, || detail.clone())?;
    Ok(detail)
}

fn col_norms(m: &Mat) -> Vec<f64> {
    (0..m.cols()).map(|j| m.column(j).iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
}

fn transform_suite() -> Check {
    let mut rng = SeededRng::new(2);
    let (mut round, mut ortho, mut parseval) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let n = 20 + rng.below(41);
        let pc = random_cloud(n, &mut rng);
        let full = pipeline::shape_basis(&pc, 6, n, &EigenOptions::default()).map_err(err)?;
        let f = random_mat(n, 3, &mut rng);
        let fnorm = f.frobenius_norm();
        let sig = VertexSignal::new(f.clone()).map_err(err)?;
        let alpha = forward_transform(&sig, &full).map_err(err)?;
        let back = backward_transform(&alpha, &full).map_err(err)?;
        round = round.max(back.values().sub(&f).frobenius_norm() / fnorm);
        for (a, g) in col_norms(alpha.values()).iter().zip(col_norms(&f)) {
            parseval = parseval.max((a - g).abs() / g);
        }
        for m in [1, n / 4, n / 2, n - 1] {
            let b = full.truncated(m.max(1));
            let proj = backward_transform(&forward_transform(&sig, &b).map_err(err)?, &b).map_err(err)?;
            let r = f.sub(proj.values());
            ortho = ortho.max(b.vectors().t_matmul(&r).max_abs() / fnorm);
        }
    }
    let detail = format!("round trip {round:.1e}·‖f‖, residual ⟂ {ortho:.1e}·‖f‖, Parseval {parseval:.1e}");
    ensure(round <= 1e-10 && ortho <= 1e-10 && parseval <= 1e-10, || detail.clone())?;
    Ok(detail)
}

fn path_basis(n: usize) -> SpectralBasis {
    let edges: Vec<(usize, usize, f64)> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    let g = WeightedGraph::from_edges(n, &edges).unwrap();
    eigendecompose(&laplacian(&g).unwrap(), n, &EigenOptions::default()).unwrap()
}

fn kernel_suite() -> Check {
    let lambda: Vec<f64> = (0..41).map(|i| i as f64 / 20.0).collect();
    let mut rng = SeededRng::new(3);
    for gamma in [0.5, 1.0, 4.0, 16.0, 64.0] {
        let unit = KernelSpec::new(KernelKind::ModulatedExpWindow, gamma, vec![1.0, 0.0, 0.0, 0.0, 0.0]).map_err(err)?;
        ensure(kernel_multipliers(&unit, &lambda).map_err(err)?.iter().all(|&m| m == 1.0), || {
            format!("ω = (1, 0, …) is not the all-pass kernel at γ = {gamma}")
        })?;
    }
    for _ in 0..20 {
        let omega: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
        // Odd positions counting from 1: the cosine weights.
        let cos_sum: f64 = omega.iter().step_by(2).sum();
        for gamma in [0.5, 3.0, 40.0] {
            let spec = KernelSpec::new(KernelKind::ModulatedExpWindow, gamma, omega.clone()).map_err(err)?;
            let m0 = kernel_multipliers(&spec, &[0.0]).map_err(err)?[0];
            ensure((m0 - cos_sum).abs() < 1e-12, || format!("m(0) = {m0} but Σω_odd = {cos_sum} at γ = {gamma}"))?;
        }
    }
    let mut slack = f64::INFINITY;
    for _ in 0..1000 {
        let n = 1 + rng.below(5);
        let omega: Vec<f64> = (0..2 * n + 1).map(|_| 2.0 * rng.normal()).collect();
        let gamma = rng.uniform_range(0.01, 100.0);
        let l = rng.uniform_range(0.0, 2.0);
        let spec = KernelSpec::new(KernelKind::ModulatedExpWindow, gamma, omega.clone()).map_err(err)?;
        let m = kernel_multipliers(&spec, &[l]).map_err(err)?[0];
        let bound: f64 = (0..=n)
            .map(|j| {
                let sin = if j > 0 { omega[2 * j - 1].abs() } else { 0.0 };
                (omega[2 * j].abs() + sin) * (-(j as f64) * gamma * l).exp()
            })
            .sum();
        ensure(m.abs() <= bound + 1e-12, || format!("|m| = {} exceeds envelope {bound}", m.abs()))?;
        slack = slack.min(bound - m.abs());
    }
    let b = path_basis(40);
    let support = |gamma: f64| -> std::result::Result<usize, String> {
        let spec = KernelSpec::new(KernelKind::ModulatedExpWindow, gamma, vec![0.0, 0.0, 1.0]).map_err(err)?;
        let v = spatial_kernel_profile(&spec, &b, 20).map_err(err)?.values().column(0);
        let peak = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        Ok(v.iter().filter(|x| x.abs() > 0.01 * peak).count())
    };
    let gammas = [0.25, 1.0, 4.0, 16.0, 64.0];
    let sizes = gammas.iter().map(|&g| support(g)).collect::<std::result::Result<Vec<_>, _>>()?;
    ensure(sizes.windows(2).all(|w| w[1] >= w[0]) && sizes[4] > sizes[0], || {
        format!("path-graph support over γ {gammas:?}: {sizes:?}")
    })?;
    Ok(format!("identities hold, envelope min slack {slack:.1e} on 1000 draws, support over γ {gammas:?}: {sizes:?}"))
}

fn gradient_suite() -> Check {
    let checks = oracles::adjoint::all();
    let (worst_name, worst) = checks.iter().fold(("", 0.0f64), |a, &(n, e)| if e > a.1 { (n, e) } else { a });
    ensure(checks.len() >= 15 && worst < 1e-8, || format!("adjoint {worst_name}: {worst:.1e}"))?;

    let config = ModelConfig::paper10_tiny(3, HeadKind::Segmentation { classes: 2 });
    let shape = synthetic_shape(SynthKind::Ellipsoid, 30, 11).map_err(err)?;
    let basis = pipeline::shape_basis(&shape.cloud, 6, 20, &EigenOptions::default()).map_err(err)?;
    let dense: Vec<PointCloud> = (0..3)
        .map(|i| synthetic_shape(SynthKind::Ellipsoid, 400, 111 + i).map(|s| s.cloud))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let graphs = pipeline::voxel_graphs(&dense.iter().collect::<Vec<_>>(), config.spectn.resolution).map_err(err)?;
    let avg = build_average_shape(&graphs, config.spectn.k_canon, &EigenOptions::default()).map_err(err)?;
    let target = pipeline::target_for(config.head.unwrap(), &shape.cloud, None).map_err(err)?;
    let sample = pipeline::make_sample(&shape.cloud, basis, &config, target, Some(&avg)).map_err(err)?;
    let mut model = Model::new(config, 3).map_err(err)?;
    perturb_params(&mut model, 0.05, 4);
    let report = check_model(&model, &sample, FmapMode::Learned, 1e-2, 9, 1e-5).map_err(err)?;
    let detail = format!(
        "{} adjoint checks, worst {worst:.1e} ({worst_name}); paper10-tiny n = {} c = 4: {} entries, max relative error {:.1e}",
        checks.len(),
        sample.basis.n(),
        report.entries(),
        report.max_rel_error()
    );
    ensure(sample.basis.n() == 30 && report.passes(1e-4), || detail.clone())?;
    Ok(detail)
}

fn centre(i: usize, r: usize) -> f64 {
    (i as f64 + 0.5) / r as f64
}

/// Voxel centres of a solid ellipsoid whose radii are jittered by `seed`,
/// labelled alternately.
fn blob(r: usize, radii: [f64; 3], jitter: f64, seed: u64) -> PointCloud {
    let mut rng = SeededRng::new(seed);
    let rad = radii.map(|v| v + jitter * rng.normal());
    let mut pts = Vec::new();
    for x in 0..r {
        for y in 0..r {
            for z in 0..r {
                let p = [centre(x, r), centre(y, r), centre(z, r)];
                if (0..3).map(|a| ((p[a] - 0.5) / rad[a]).powi(2)).sum::<f64>() <= 1.0 {
                    pts.push(p);
                }
            }
        }
    }
    let n = pts.len() as u32;
    PointCloud::new(pts).unwrap().with_labels((0..n).map(|i| i % 2).collect()).unwrap()
}

/// Eigenbasis of a voxel-centre shape's own 6-connected voxel graph.
fn voxel_graph_basis(pc: &PointCloud, r: usize, m: usize) -> std::result::Result<SpectralBasis, String> {
    let vg = VoxelGraph::from_point_cloud(pc, r).map_err(err)?;
    let cells = voxel_assignment(pc, r).map_err(err)?;
    let local = |v: usize| cells.iter().position(|&c| c == v).unwrap();
    let edges: Vec<(usize, usize, f64)> = vg
        .adjacency()
        .triplets()
        .into_iter()
        .filter(|&(i, j, _)| i < j)
        .map(|(i, j, w)| (local(i), local(j), w))
        .collect();
    let g = WeightedGraph::from_edges(pc.len(), &edges).map_err(err)?;
    eigendecompose(&laplacian(&g).map_err(err)?, m, &EigenOptions::default()).map_err(err)
}

fn fmap_suite() -> Check {
    let opts = EigenOptions::default();
    // C_pre against a dense product.
    let one = blob(8, [0.45, 0.33, 0.38], 0.0, 0);
    let avg8 = build_average_shape(&[VoxelGraph::from_point_cloud(&one, 8).map_err(err)?], 12, &opts).map_err(err)?;
    let mut rng = SeededRng::new(5);
    let mut product = 0.0f64;
    for _ in 0..5 {
        let bv = random_mat(512, 6, &mut rng);
        let got = precompute_fmap_from_values(&bv, &avg8, 6).map_err(err)?;
        let oracle = to_na(avg8.values()).transpose() * to_na(&bv);
        for i in 0..12 {
            for j in 0..6 {
                product = product.max((got.matrix()[(i, j)] - oracle[(i, j)]).abs());
            }
        }
    }
    ensure(product <= 1e-12, || format!("C_pre differs from B̄ᵀB_v by {product:.1e}"))?;

    // A shape mapped against itself.
    let own = voxel_graph_basis(&one, 8, 8)?;
    let c = precompute_fmap(&voxelize_bases(&one, &own, 8).map_err(err)?, &avg8, 8).map_err(err)?;
    let diag = (0..8).map(|i| c.matrix()[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    ensure(diag >= 0.99, || format!("self-map min |diag| {diag:.4}"))?;

    // SpecTN pretraining on ten blobs sampled at voxel centres.
    let r = 16;
    let spectn = SpecTnConfig { resolution: r, ..SpecTnConfig::default() };
    let config = ModelConfig::paper10(2, 3, HeadKind::Segmentation { classes: 2 }, spectn);
    let shapes: Vec<PointCloud> = (0..10).map(|i| blob(r, [0.33, 0.27, 0.22], 0.03, 40 + i)).collect();
    let graphs = pipeline::voxel_graphs(&shapes.iter().collect::<Vec<_>>(), r).map_err(err)?;
    let avg = build_average_shape(&graphs, spectn.k_canon, &opts).map_err(err)?;
    let data = shapes
        .iter()
        .map(|pc| {
            let b = pipeline::shape_basis(pc, 6, 15, &opts)?;
            let t = pipeline::target_for(config.head.unwrap(), pc, None)?;
            pipeline::make_sample(pc, b, &config, t, Some(&avg))
        })
        .collect::<Result<Vec<Sample>, _>>()
        .map_err(err)?;
    for s in &data {
        let (v, cp) = (s.voxels.as_ref().unwrap(), s.c_pre.as_ref().unwrap());
        let oracle = to_na(avg.values()).transpose() * to_na(v);
        let d = (to_na(cp) - oracle).abs().max();
        product = product.max(d);
    }
    ensure(product <= 1e-12, || format!("pipeline C_pre differs from B̄ᵀB_v by {product:.1e}"))?;
    let mut model = Model::new(config, 1).map_err(err)?;
    let fit = |model: &Model| -> std::result::Result<(f64, f64), String> {
        let (mut f, mut o) = (0.0, 0.0f64);
        for s in &data {
            let c = model.config().spectn.forward(model.params(), s.voxels.as_ref().unwrap()).map_err(err)?;
            let (fi, oi) = spectn_losses(c.matrix(), s.c_pre.as_ref().unwrap()).map_err(err)?;
            f += fi;
            o = o.max(oi.sqrt());
        }
        Ok((f, o))
    };
    let (before, _) = fit(&model)?;
    let cfg = TrainConfig {
        epochs: 600,
        batch_size: 10,
        ortho_weight: 10.0,
        optimizer: OptimizerKind::Adam(AdamConfig { lr: 3e-3, ..AdamConfig::default() }),
        ..TrainConfig::default()
    };
    pretrain_spectn(&mut model, &data, &cfg).map_err(err)?;
    let (after, ortho) = fit(&model)?;
    let reduction = 1.0 - after / before;
    let detail = format!(
        "C_pre vs dense product {product:.1e}; self-map min |diag| {diag:.4}; pretraining fit {before:.3} → {after:.4} \
         ({:.1}% reduction), max ‖CᵀC−I‖_F {ortho:.3}",
        100.0 * reduction
    );
    ensure(reduction >= 0.9 && ortho <= 0.1, || detail.clone())?;
    Ok(detail)
}

fn samples(set: &[SyntheticShape], config: &ModelConfig, avg: Option<&AverageShape>) -> Vec<Sample> {
    set.iter()
        .map(|s| {
            let b = pipeline::shape_basis(&s.cloud, 6, 100, &EigenOptions::default()).unwrap();
            let t = pipeline::target_for(config.head.unwrap(), &s.cloud, None).unwrap();
            pipeline::make_sample(&s.cloud, b, config, t, avg).unwrap()
        })
        .collect()
}

/// Mean per-shape (point accuracy, IoU).
fn scores(model: &Model, set: &[Sample], fmap: FmapMode) -> (f64, f64) {
    let (mut acc, mut iou) = (0.0, 0.0);
    for s in set {
        let pred = tasks::argmax_rows(&predict_sample(model, s, fmap).unwrap());
        let Target::Labels(l) = &s.target else { unreachable!() };
        let gt: Vec<u32> = l.iter().map(|&v| v as u32).collect();
        acc += tasks::point_accuracy(&pred, &gt).unwrap();
        iou += tasks::iou(&pred, &gt).unwrap().mean;
    }
    (acc / set.len() as f64, iou / set.len() as f64)
}

fn adam(lr: f64) -> OptimizerKind {
    OptimizerKind::Adam(AdamConfig { lr, ..AdamConfig::default() })
}

fn overfit() -> Check {
    let head = HeadKind::Segmentation { classes: 2 };
    let train_set = synthetic_set(8, 500, 7).map_err(err)?;
    let spectn = SpecTnConfig { resolution: 8, conv1: 4, conv2: 8, hidden: 32, ..SpecTnConfig::default() };
    let mut config = ModelConfig::paper10(8, 3, head, spectn);
    config.dropout = 0.0;
    let clouds: Vec<&PointCloud> = train_set.iter().map(|s| &s.cloud).collect();
    let graphs = pipeline::voxel_graphs(&clouds, spectn.resolution).map_err(err)?;
    let avg = build_average_shape(&graphs, spectn.k_canon, &EigenOptions::default()).map_err(err)?;
    let data = samples(&train_set, &config, Some(&avg));
    let mut model = Model::new(config, 0).map_err(err)?;
    let cfg = TrainConfig { epochs: 500, fmap: FmapMode::Precomputed, optimizer: adam(1e-2), ..TrainConfig::default() };
    let history = train(&mut model, &data, &cfg).map_err(err)?;
    let (acc, iou) = scores(&model, &data, FmapMode::Precomputed);
    let first = history.iter().position(|r| r.loss < 0.05).map_or("never".into(), |e| e.to_string());
    let detail = format!(
        "paper10 c = 8: training accuracy {:.2}% (IoU {iou:.4}) after 500 epochs, loss {:.4}, first below 0.05 at epoch {first}",
        100.0 * acc,
        history.last().unwrap().loss
    );
    ensure(acc >= 0.98, || detail.clone())?;
    Ok(detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn kernel_trend() -> Check {
    let head = HeadKind::Segmentation { classes: 2 };
    let train_set = synthetic_set(8, 500, 7).map_err(err)?;
    let test_set = synthetic_set(8, 500, 8).map_err(err)?;
    let mut medians = Vec::new();
    let mut lines = Vec::new();
    for (name, multiscale) in [("multiscale", true), ("γ ≡ 1", false)] {
        let mut config = ModelConfig::kernel_study(8, 3, head, multiscale);
        config.dropout = 0.2;
        let (tr, te) = (samples(&train_set, &config, None), samples(&test_set, &config, None));
        let mut ious = Vec::new();
        for seed in 0..3 {
            let mut model = Model::new(config.clone(), seed).map_err(err)?;
            let cfg =
                TrainConfig { epochs: 200, fmap: FmapMode::Identity, seed, optimizer: adam(1e-2), ..TrainConfig::default() };
            train(&mut model, &tr, &cfg).map_err(err)?;
            ious.push(scores(&model, &te, FmapMode::Identity).1);
        }
        let fmt: Vec<String> = ious.iter().map(|v| format!("{v:.4}")).collect();
        lines.push(format!("{name} [{}]", fmt.join(", ")));
        medians.push(median(ious));
    }
    let detail = format!(
        "held-out IoU median multiscale {:.4} vs γ ≡ 1 {:.4}; {}",
        medians[0],
        medians[1],
        lines.join(", ")
    );
    ensure(medians[0] >= medians[1], || detail.clone())?;
    Ok(detail)
}

fn metric_suite() -> Check {
    for seed in 0..100 {
        oracles::metrics::check_fixture(seed).map_err(|e| format!("fixture {seed}: {e}"))?;
    }
    Ok("100 random fixtures match the counting oracles; PCK monotone".into())
}

fn sscnn(config: &Path, args: &[&str]) -> std::result::Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_sscnn"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .map_err(err)?;
    if !out.status.success() {
        return Err(format!("sscnn {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn robustness() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let data = dir.path().join("data");
    let train_set = synthetic_set(8, 500, 7).map_err(err)?;
    let test_set = synthetic_set(4, 500, 8).map_err(err)?;
    dataset::write_synthetic_dataset(&data, &train_set, &test_set).map_err(err)?;
    let config = dir.path().join("run.cfg");
    fs::write(
        &config,
        "[data]\nroot = data\ntrain_split = data/train.txt\ntest_split = data/test.txt\n\
         [task]\nkind = segmentation\nclasses = 2\n\
         [model]\npreset = paper10\nwidth = 4\nfmap = precomputed\n\
         [spectn]\nresolution = 8\nconv1 = 4\nconv2 = 8\nhidden = 32\n\
         [train]\nepochs = 40\nlr = 0.01\n\
         [eval]\nratios = 1.0, 0.75, 0.5, 0.25\n\
         [run]\nout = out\n",
    )
    .map_err(err)?;
    for cmd in ["build-basis", "precompute-fmap", "train", "eval", "downsample-eval"] {
        sscnn(&config, &[cmd])?;
    }
    let out = dir.path().join("out");
    let metrics = formats::read_csv(&out.join("metrics.csv")).map_err(err)?;
    let eval_iou = &metrics.iter().find(|r| r[0] == "all").ok_or("metrics.csv has no 'all' row")?[2];
    let rows = formats::read_csv(&out.join("downsample.csv")).map_err(err)?;
    let ratios: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    ensure(ratios.len() == 4, || format!("downsample.csv ratios {ratios:?}"))?;
    let full = rows.iter().find(|r| r[0].parse::<f64>() == Ok(1.0)).ok_or("no ratio 1.0 row")?;
    let curve: Vec<String> = rows.iter().map(|r| format!("{}: {}", r[0], r[1])).collect();
    let detail = format!("mean IoU by ratio {{{}}}; eval {eval_iou}", curve.join(", "));
    ensure(&full[1] == eval_iou, || detail.clone())?;
    Ok(detail)
}

struct Criterion {
    id: &'static str,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

fn main() {
    let secs = Duration::from_secs;
    let criteria = [
        Criterion { id: "1", name: "eigen suite", budget: secs(30), run: eigen_suite },
        Criterion { id: "2", name: "transform suite", budget: secs(10), run: transform_suite },
        Criterion { id: "3", name: "kernel suite", budget: secs(10), run: kernel_suite },
        Criterion { id: "4", name: "gradient suite", budget: secs(120), run: gradient_suite },
        Criterion { id: "5", name: "functional-map suite", budget: secs(300), run: fmap_suite },
        Criterion { id: "6a", name: "overfit", budget: secs(450), run: overfit },
        Criterion { id: "6b", name: "kernel trend", budget: secs(450), run: kernel_trend },
        Criterion { id: "7", name: "metric suite", budget: secs(10), run: metric_suite },
        Criterion { id: "8", name: "robustness harness", budget: secs(600), run: robustness },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for c in criteria.iter().filter(|c| filter.is_empty() || filter.iter().any(|f| f == c.id)) {
        let t = Instant::now();
        let outcome = (c.run)();
        let took = t.elapsed();
        let outcome = match outcome {
            Ok(d) if took > c.budget => Err(format!("{d}; over the {} s budget", c.budget.as_secs())),
            o => o,
        };
        let known = KNOWN_FAILURES.contains(&c.id);
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.clone()),
            Err(d) if known => ("FAIL (known)", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("{status} {} {} [{:.1} s]: {detail}", c.id, c.name, took.as_secs_f64());
        if outcome.is_err() && !known {
            unexpected.push(c.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
