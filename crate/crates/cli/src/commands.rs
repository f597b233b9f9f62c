//! The workflow verbs. Each reads its prerequisites from the output
//! directory, writes its artifacts there, and logs progress to stderr.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use sscnn_core::eigen::SpectralBasis;
use sscnn_core::gradcheck;
use sscnn_core::graph::{self, PointCloud};
use sscnn_core::network::{coordinate_features, HeadKind, Model, ModelConfig};
use sscnn_core::pipeline;
use sscnn_core::rng::SeededRng;
use sscnn_core::spectral::{kernel_multipliers, spatial_kernel_profile, KernelKind, KernelSpec};
use sscnn_core::sync::{self, AverageShape};
use sscnn_core::tasks::{self, KeypointResult};
use sscnn_core::train::{self, FmapMode, Sample, Target};
use sscnn_core::Mat;

use crate::config::{RunConfig, TaskKind};
use crate::dataset::{self, Artifacts, Shape, ShapeRef};
use crate::error::CliError;
use crate::formats;

/// Gradient checks fail at or above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn log(msg: impl AsRef<str>) {
    eprintln!("[sscnn] {}", msg.as_ref());
}

fn artifacts(cfg: &RunConfig) -> Artifacts<'_> {
    Artifacts { out: &cfg.out }
}

fn nonempty(shapes: Vec<ShapeRef>) -> Result<Vec<ShapeRef>> {
    if shapes.is_empty() {
        return Err(CliError::usage("no shapes"));
    }
    Ok(shapes)
}

fn load_basis(cfg: &RunConfig, r: &ShapeRef) -> Result<SpectralBasis> {
    let a = artifacts(cfg);
    let path = a.basis(r);
    let fresh = fs::read_to_string(a.basis_hash(r)).ok().map(|h| h.trim().to_string());
    if !path.exists() || fresh != Some(dataset::basis_hash(cfg, r)?) {
        return Err(CliError::missing(format!("up-to-date basis cache for {}", r.key()), path, "build-basis"));
    }
    formats::read_basis(&path)
}

fn load_fmap(cfg: &RunConfig, r: &ShapeRef) -> Result<Mat> {
    let path = artifacts(cfg).fmap(r);
    if !path.exists() {
        return Err(CliError::missing(format!("precomputed map for {}", r.key()), path, "precompute-fmap"));
    }
    formats::read_fmap(&path)
}

fn load_average(cfg: &RunConfig, model: &ModelConfig) -> Result<AverageShape> {
    let path = artifacts(cfg).average();
    if !path.exists() {
        return Err(CliError::missing("average shape", path, "precompute-fmap"));
    }
    formats::read_average(&path, model.spectn.k_canon, &cfg.eigen)
}

fn load_checkpoint(path: PathBuf, what: &str, command: &'static str) -> Result<(Model, FmapMode)> {
    if !path.exists() {
        return Err(CliError::missing(what, path, command));
    }
    formats::read_checkpoint(&path)
}

fn check_head(cfg: &RunConfig, model: &ModelConfig) -> Result<()> {
    if model.head != Some(cfg.head()) {
        return Err(CliError::usage(format!(
            "checkpoint head {:?} does not match the configured task {:?}",
            model.head,
            cfg.head()
        )));
    }
    Ok(())
}

fn target(cfg: &RunConfig, shape: &Shape) -> Result<Target> {
    pipeline::target_for(cfg.head(), &shape.cloud, shape.keypoints.as_deref())
        .with_context(|| format!("targets for {}", shape.r.key()))
}

fn sample(model: &ModelConfig, cloud: &PointCloud, basis: SpectralBasis, target: Target, c_pre: Option<Mat>) -> Result<Sample> {
    let voxels = if model.uses_spectn() {
        Some(pipeline::voxel_input(cloud, &basis, model.spectn.k_local, model.spectn.resolution)?)
    } else {
        None
    };
    Ok(Sample {
        basis,
        input: coordinate_features(cloud),
        target,
        voxels,
        c_pre,
    })
}

/// Samples of `refs` from the cached bases (and cached maps when
/// `with_maps`), in `refs` order.
fn cached_samples(cfg: &RunConfig, model: &ModelConfig, refs: &[ShapeRef], with_maps: bool) -> Result<Vec<(Shape, Sample)>> {
    refs.par_iter()
        .map(|r| {
            let shape = Shape::load(r)?;
            let basis = load_basis(cfg, r)?;
            let c_pre = if with_maps { Some(load_fmap(cfg, r)?) } else { None };
            let s = sample(model, &shape.cloud, basis, target(cfg, &shape)?, c_pre)?;
            Ok((shape, s))
        })
        .collect()
}

pub fn build_basis(cfg: &RunConfig) -> Result<()> {
    let refs = nonempty(dataset::all_shapes(cfg)?)?;
    let a = artifacts(cfg);
    let results: Vec<(String, Result<bool>)> = refs
        .par_iter()
        .map(|r| {
            let run = || -> Result<bool> {
                let hash = dataset::basis_hash(cfg, r)?;
                let cached = fs::read_to_string(a.basis_hash(r)).ok();
                if a.basis(r).exists() && cached.as_deref().map(str::trim) == Some(hash.as_str()) {
                    return Ok(false);
                }
                let (cloud, _) = dataset::load_cloud(&r.pts)?;
                let basis = pipeline::shape_basis(&cloud, cfg.k, cfg.m, &cfg.eigen)?;
                formats::write_basis(&a.basis(r), &basis)?;
                formats::write_atomic(&a.basis_hash(r), &format!("{hash}\n"))?;
                Ok(true)
            };
            (r.key(), run())
        })
        .collect();
    let (mut built, mut hits, mut failed) = (0, 0, 0);
    for (key, res) in results {
        match res {
            Ok(true) => {
                built += 1;
                log(format!("built {key}"));
            }
            Ok(false) => {
                hits += 1;
                log(format!("cache hit {key}"));
            }
            Err(e) => {
                failed += 1;
                log(format!("failed {key}: {e:#}"));
            }
        }
    }
    println!("bases: {built} built, {hits} cached, {failed} failed");
    if failed > 0 {
        bail!("{failed} of {} shapes failed", refs.len());
    }
    Ok(())
}

fn require_spectn(cfg: &RunConfig, verb: &str) -> Result<()> {
    if !cfg.model.uses_spectn() {
        return Err(CliError::usage(format!("{verb}: the configured model has no SpecTN blocks")));
    }
    Ok(())
}

pub fn precompute_fmap(cfg: &RunConfig) -> Result<()> {
    require_spectn(cfg, "precompute-fmap")?;
    let train = nonempty(dataset::train_shapes(cfg)?)?;
    let spectn = cfg.model.spectn;
    let clouds: Vec<PointCloud> = train.par_iter().map(|r| Ok(Shape::load(r)?.cloud)).collect::<Result<_>>()?;
    let graphs = pipeline::voxel_graphs(&clouds.iter().collect::<Vec<_>>(), spectn.resolution)?;
    let avg = sync::build_average_shape(&graphs, spectn.k_canon, &cfg.eigen).context("building the average shape")?;
    formats::write_average(&artifacts(cfg).average(), &avg)?;
    log(format!("average shape over {} shapes, support {} voxels", train.len(), avg.support().len()));
    let all = dataset::all_shapes(cfg)?;
    all.par_iter()
        .map(|r| {
            let (cloud, _) = dataset::load_cloud(&r.pts)?;
            let basis = load_basis(cfg, r)?;
            let voxels = pipeline::voxel_input(&cloud, &basis, spectn.k_local, spectn.resolution)?;
            formats::write_fmap(&artifacts(cfg).fmap(r), &pipeline::precomputed_map(&voxels, &avg)?)
        })
        .collect::<Result<()>>()?;
    println!("maps: {} written", all.len());
    Ok(())
}

pub fn pretrain_spectn(cfg: &RunConfig) -> Result<()> {
    require_spectn(cfg, "pretrain-spectn")?;
    let refs = nonempty(dataset::train_shapes(cfg)?)?;
    let data: Vec<Sample> = cached_samples(cfg, &cfg.model, &refs, true)?.into_iter().map(|p| p.1).collect();
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    let history = train::pretrain_spectn(&mut model, &data, &cfg.pretrain.train_config(cfg.fmap, cfg.seed))?;
    let a = artifacts(cfg);
    formats::write_checkpoint(&a.spectn_checkpoint(), &model, cfg.fmap)?;
    formats::write_loss_csv(&cfg.out.join("pretrain_loss.csv"), &history)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("pretrain loss {} -> {}", first.loss, last.loss);
    }
    Ok(())
}

pub fn train_model(cfg: &RunConfig) -> Result<()> {
    let refs = nonempty(dataset::train_shapes(cfg)?)?;
    let a = artifacts(cfg);
    let mut model = if cfg.model.uses_spectn() && cfg.fmap == FmapMode::Learned {
        let (m, _) = load_checkpoint(a.spectn_checkpoint(), "pretrained SpecTN checkpoint", "pretrain-spectn")?;
        if m.config() != &cfg.model {
            return Err(CliError::usage("spectn.ckpt was pretrained for a different model config; rerun pretrain-spectn"));
        }
        m
    } else {
        Model::new(cfg.model.clone(), cfg.seed)?
    };
    let data: Vec<Sample> = cached_samples(cfg, &cfg.model, &refs, cfg.fmap == FmapMode::Precomputed)?
        .into_iter()
        .map(|p| p.1)
        .collect();
    let history = train::train(&mut model, &data, &cfg.train.train_config(cfg.fmap, cfg.seed))?;
    formats::write_checkpoint(&a.model_checkpoint(), &model, cfg.fmap)?;
    formats::write_loss_csv(&cfg.out.join("train_loss.csv"), &history)?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!("train loss {} -> {}", first.loss, last.loss);
    }
    Ok(())
}

fn predictions(model: &Model, fmap: FmapMode, samples: &[Sample]) -> Result<Vec<Mat>> {
    samples.par_iter().map(|s| Ok(train::predict_sample(model, s, fmap)?)).collect()
}

fn labels_of(s: &Sample) -> Vec<u32> {
    match &s.target {
        Target::Labels(l) => l.iter().map(|&v| v as u32).collect(),
        Target::Values(_) => Vec::new(),
    }
}

/// Per-category mean IoU (categories weighted by shape count) and mean
/// point accuracy. Shared by `eval` and `downsample-eval`.
pub fn segmentation_scores(model: &Model, fmap: FmapMode, data: &[(String, Sample)]) -> Result<(tasks::CategoryReport<String>, f64)> {
    let samples: Vec<Sample> = data.iter().map(|d| d.1.clone()).collect();
    let preds = predictions(model, fmap, &samples)?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut acc = 0.0;
    for ((category, s), p) in data.iter().zip(&preds) {
        let pred = tasks::argmax_rows(p);
        let gt = labels_of(s);
        groups.entry(category.clone()).or_default().push(tasks::iou(&pred, &gt)?.mean);
        acc += tasks::point_accuracy(&pred, &gt)?;
    }
    let groups: Vec<(String, Vec<f64>)> = groups.into_iter().collect();
    Ok((tasks::category_mean_iou(&groups)?, acc / data.len() as f64))
}

fn eval_model(cfg: &RunConfig) -> Result<(Model, FmapMode)> {
    let (model, fmap) = load_checkpoint(artifacts(cfg).model_checkpoint(), "trained model checkpoint", "train")?;
    check_head(cfg, model.config())?;
    Ok((model, fmap))
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let (model, fmap) = eval_model(cfg)?;
    let refs = nonempty(dataset::test_shapes(cfg)?)?;
    let loaded = cached_samples(cfg, model.config(), &refs, fmap == FmapMode::Precomputed)?;
    match cfg.task {
        TaskKind::Segmentation => {
            let data: Vec<(String, Sample)> = loaded.into_iter().map(|(sh, s)| (sh.r.category, s)).collect();
            let (report, acc) = segmentation_scores(&model, fmap, &data)?;
            let mut rows: Vec<String> = report
                .categories
                .iter()
                .map(|c| format!("{},{},{}", c.category, c.count, c.mean_iou))
                .collect();
            rows.push(format!("all,{},{}", data.len(), report.weighted_mean));
            formats::write_csv(&cfg.out.join("metrics.csv"), "category,count,mean_iou", &rows)?;
            println!("mean IoU {} (point accuracy {acc})", report.weighted_mean);
        }
        TaskKind::Keypoint => {
            let samples: Vec<Sample> = loaded.iter().map(|p| p.1.clone()).collect();
            let preds = predictions(&model, fmap, &samples)?;
            let results = loaded
                .iter()
                .zip(&preds)
                .map(|((shape, _), p)| {
                    let pts = shape.cloud.points();
                    let kp = shape.keypoints.as_deref().unwrap_or_default();
                    let predicted = tasks::keypoint_predictions(p, pts)?;
                    Ok(KeypointResult {
                        predicted: predicted[..kp.len().min(predicted.len())].to_vec(),
                        ground_truth: kp.iter().map(|&i| pts[i]).collect(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let curve = tasks::pck(&results, &cfg.pck_thresholds)?;
            let rows: Vec<String> = cfg.pck_thresholds.iter().zip(&curve).map(|(t, v)| format!("{t},{v}")).collect();
            formats::write_csv(&cfg.out.join("pck.csv"), "threshold,pck", &rows)?;
            println!("PCK {}", rows.join(" "));
        }
        TaskKind::Normals => {
            let samples: Vec<Sample> = loaded.iter().map(|p| p.1.clone()).collect();
            let preds = predictions(&model, fmap, &samples)?;
            let (mut pred, mut gt) = (Vec::new(), Vec::new());
            for ((shape, _), p) in loaded.iter().zip(&preds) {
                pred.extend((0..p.rows()).map(|i| [p[(i, 0)], p[(i, 1)], p[(i, 2)]]));
                gt.extend_from_slice(shape.cloud.normals().unwrap_or_default());
            }
            let r = tasks::normal_error(&pred, &gt)?;
            let angle = r.mean_angle_deg.map_or("nan".into(), |a| a.to_string());
            let rows = vec![
                format!("mean_angle_deg,{angle}"),
                format!("l2,{}", r.l2),
                format!("zero_norm_predictions,{}", r.zero_norm_predictions),
            ];
            formats::write_csv(&cfg.out.join("normals.csv"), "metric,value", &rows)?;
            println!("normal error {angle} deg, L2 {}", r.l2);
        }
    }
    Ok(())
}

/// A sample for a shape outside the caches: fresh basis, and a map
/// against the saved average when the model uses precomputed maps.
fn fresh_sample(cfg: &RunConfig, model: &ModelConfig, fmap: FmapMode, cloud: &PointCloud, target: Target, avg: Option<&AverageShape>) -> Result<Sample> {
    let basis = pipeline::shape_basis(cloud, cfg.k, cfg.m, &cfg.eigen)?;
    let mut s = sample(model, cloud, basis, target, None)?;
    if fmap == FmapMode::Precomputed {
        let avg = avg.expect("precomputed maps need the average");
        s.c_pre = Some(pipeline::precomputed_map(s.voxels.as_ref().expect("SpecTN models have voxel input"), avg)?);
    }
    Ok(s)
}

pub fn predict(cfg: &RunConfig, shape: &Path) -> Result<PathBuf> {
    let (model, fmap) = eval_model(cfg)?;
    let (cloud, _) = dataset::load_cloud(shape)?;
    let avg = if fmap == FmapMode::Precomputed { Some(load_average(cfg, model.config())?) } else { None };
    // Targets are not needed to predict; a dummy keeps `Sample` complete.
    let s = fresh_sample(cfg, model.config(), fmap, &cloud, Target::Labels(vec![0; cloud.len()]), avg.as_ref())?;
    let out = train::predict_sample(&model, &s, fmap)?;
    let stem = shape.file_stem().map_or("shape".into(), |s| s.to_string_lossy().into_owned());
    let dir = cfg.out.join("predictions");
    let path = match cfg.head() {
        HeadKind::Normals => {
            let path = dir.join(format!("{stem}.nrm"));
            let rows: Vec<[f64; 3]> = (0..out.rows()).map(|i| [out[(i, 0)], out[(i, 1)], out[(i, 2)]]).collect();
            formats::write_nrm(&path, &rows)?;
            path
        }
        _ => {
            let path = dir.join(format!("{stem}.seg"));
            formats::write_ints(&path, &tasks::argmax_rows(&out))?;
            path
        }
    };
    println!("wrote {}", path.display());
    Ok(path)
}

pub fn gradcheck(cfg: &RunConfig) -> Result<f64> {
    let refs = nonempty(dataset::train_shapes(cfg)?)?;
    let shape = Shape::load(&refs[0])?;
    let n = shape.cloud.len();
    let keep = cfg.gradcheck_points.min(n);
    let mut idx = SeededRng::new(cfg.seed).sample_indices(n, keep);
    idx.sort_unstable();
    let cloud = shape.cloud.select(&idx)?;
    let keypoints = shape
        .keypoints
        .as_ref()
        .map(|kp| kp.iter().filter_map(|k| idx.iter().position(|i| i == k)).collect::<Vec<_>>());
    let small = Shape { r: shape.r.clone(), cloud, keypoints };
    let avg = if cfg.fmap == FmapMode::Precomputed { Some(load_average(cfg, &cfg.model)?) } else { None };
    let s = fresh_sample(cfg, &cfg.model, cfg.fmap, &small.cloud, target(cfg, &small)?, avg.as_ref())?;
    let mut model = Model::new(cfg.model.clone(), cfg.seed)?;
    // Zero-initialized SpecTN output would leave upstream gradients at
    // exactly zero; perturb so every path is exercised.
    gradcheck::perturb_params(&mut model, 0.05, cfg.seed);
    let report = gradcheck::check_model(&model, &s, cfg.fmap, cfg.train.ortho_weight, cfg.seed, 1e-5)?;
    let rows: Vec<String> = report
        .tensors
        .iter()
        .map(|t| format!("{},{},{}", t.name, t.entries, t.max_rel_error))
        .collect();
    formats::write_csv(&cfg.out.join("gradcheck.csv"), "tensor,entries,max_rel_error", &rows)?;
    let max = report.max_rel_error();
    println!("gradcheck: {} entries over {} vertices, max relative error {max:e}", report.entries(), s.basis.n());
    if !report.passes(GRADCHECK_TOLERANCE) {
        bail!("gradient check failed: max relative error {max:e} >= {GRADCHECK_TOLERANCE:e}");
    }
    Ok(max)
}

pub struct KernelPlot {
    pub kind: KernelKind,
    pub dilation: f64,
    pub omega: Vec<f64>,
    pub basis: Option<PathBuf>,
    pub center: usize,
    pub samples: usize,
}

pub fn plot_kernel(out: &Path, plot: &KernelPlot) -> Result<()> {
    let spec = KernelSpec::new(plot.kind, plot.dilation, plot.omega.clone()).map_err(|e| CliError::usage(e.to_string()))?;
    if plot.samples < 2 {
        return Err(CliError::usage("--samples must be at least 2"));
    }
    let lambda: Vec<f64> = (0..plot.samples).map(|i| 2.0 * i as f64 / (plot.samples - 1) as f64).collect();
    let m = kernel_multipliers(&spec, &lambda)?;
    let rows: Vec<String> = lambda.iter().zip(&m).map(|(l, v)| format!("{l},{v}")).collect();
    formats::write_csv(&out.join("kernel_spectral.csv"), "lambda,multiplier", &rows)?;
    println!("wrote {}", out.join("kernel_spectral.csv").display());
    if let Some(path) = &plot.basis {
        let basis = formats::read_basis(path)?;
        if plot.center >= basis.n() {
            return Err(CliError::usage(format!("--center {} out of range for {} vertices", plot.center, basis.n())));
        }
        let k = spatial_kernel_profile(&spec, &basis, plot.center)?;
        let rows: Vec<String> = (0..basis.n()).map(|i| format!("{i},{}", k.values()[(i, 0)])).collect();
        formats::write_csv(&out.join("kernel_spatial.csv"), "vertex,value", &rows)?;
        println!("wrote {}", out.join("kernel_spatial.csv").display());
    }
    Ok(())
}

pub fn downsample_eval(cfg: &RunConfig, ratios: &[f64]) -> Result<()> {
    if cfg.task != TaskKind::Segmentation {
        return Err(CliError::usage("downsample-eval supports the segmentation task only"));
    }
    if ratios.is_empty() || ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(CliError::usage("ratios must be non-empty and lie in (0, 1]"));
    }
    let (model, fmap) = eval_model(cfg)?;
    let refs = nonempty(dataset::test_shapes(cfg)?)?;
    let avg = if fmap == FmapMode::Precomputed && ratios.iter().any(|&r| r < 1.0) {
        Some(load_average(cfg, model.config())?)
    } else {
        None
    };
    let mut rows = Vec::new();
    for &ratio in ratios {
        let data: Vec<(String, Sample)> = if ratio == 1.0 {
            // The full shapes go through exactly the path `eval` uses.
            cached_samples(cfg, model.config(), &refs, fmap == FmapMode::Precomputed)?
                .into_iter()
                .map(|(sh, s)| (sh.r.category, s))
                .collect()
        } else {
            refs.par_iter()
                .enumerate()
                .map(|(i, r)| {
                    let shape = Shape::load(r)?;
                    let seed = SeededRng::derive_seed(cfg.seed, i as u64);
                    let cloud = graph::downsample(&shape.cloud, ratio, cfg.k + 1, seed)
                        .with_context(|| format!("downsampling {} at {ratio}", r.key()))?;
                    let small = Shape { cloud, ..shape };
                    let s = fresh_sample(cfg, model.config(), fmap, &small.cloud, target(cfg, &small)?, avg.as_ref())?;
                    Ok((r.category.clone(), s))
                })
                .collect::<Result<_>>()?
        };
        let (report, _) = segmentation_scores(&model, fmap, &data)?;
        log(format!("ratio {ratio}: mean IoU {}", report.weighted_mean));
        rows.push(format!("{ratio},{}", report.weighted_mean));
    }
    formats::write_csv(&cfg.out.join("downsample.csv"), "ratio,mean_iou", &rows)?;
    println!("wrote {}", cfg.out.join("downsample.csv").display());
    Ok(())
}
