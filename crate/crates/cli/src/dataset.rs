//! Dataset layout and artifact paths.
//!
//! Shapes live at `<root>/<category>/<id>.pts`, with optional `.seg` part
//! labels, `.nrm` normals and `.kp` keypoint indices alongside. Split files
//! list one shape per line, either `category/id` or a bare `id` that must be
//! unique across categories.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};
use sscnn_core::graph::PointCloud;
use sscnn_core::sync::normalize_to_unit_cube;
use sscnn_core::synth::SyntheticShape;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::formats;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct ShapeRef {
    pub category: String,
    pub id: String,
    pub pts: PathBuf,
}

impl ShapeRef {
    pub fn key(&self) -> String {
        format!("{}/{}", self.category, self.id)
    }

    fn sibling(&self, ext: &str) -> PathBuf {
        self.pts.with_extension(ext)
    }
}

/// A loaded shape: points scaled into the unit cube (uniformly, keeping
/// proportions) with whatever annotations exist.
#[derive(Clone, Debug)]
pub struct Shape {
    pub r: ShapeRef,
    pub cloud: PointCloud,
    pub keypoints: Option<Vec<usize>>,
}

/// Reads a `.pts` file and its annotations.
pub fn load_cloud(pts: &Path) -> Result<(PointCloud, Option<Vec<usize>>)> {
    let mut pc = PointCloud::new(formats::read_pts(pts)?).with_context(|| format!("loading {}", pts.display()))?;
    let seg = pts.with_extension("seg");
    if seg.exists() {
        let labels = formats::read_ints(&seg)?
            .into_iter()
            .map(|v| u32::try_from(v).map_err(|_| anyhow!("{}: label {v} too large", seg.display())))
            .collect::<Result<_>>()?;
        pc = pc.with_labels(labels).with_context(|| format!("loading {}", seg.display()))?;
    }
    let nrm = pts.with_extension("nrm");
    if nrm.exists() {
        pc = pc.with_normals(formats::read_nrm(&nrm)?).with_context(|| format!("loading {}", nrm.display()))?;
    }
    let kp = pts.with_extension("kp");
    let keypoints = if kp.exists() {
        let idx: Vec<usize> = formats::read_ints(&kp)?.into_iter().map(|v| v as usize).collect();
        if let Some(bad) = idx.iter().find(|&&i| i >= pc.len()) {
            bail!("{}: keypoint index {bad} out of range", kp.display());
        }
        Some(idx)
    } else {
        None
    };
    Ok((normalize_to_unit_cube(&pc)?, keypoints))
}

impl Shape {
    pub fn load(r: &ShapeRef) -> Result<Self> {
        let (cloud, keypoints) = load_cloud(&r.pts)?;
        Ok(Shape { r: r.clone(), cloud, keypoints })
    }
}

fn categories(root: &Path) -> Result<Vec<String>> {
    let mut cats = Vec::new();
    for entry in fs::read_dir(root).with_context(|| format!("listing {}", root.display()))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            cats.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    cats.sort();
    Ok(cats)
}

fn resolve(root: &Path, cats: &[String], entry: &str) -> Result<ShapeRef> {
    if let Some((category, id)) = entry.split_once('/') {
        let pts = root.join(category).join(format!("{id}.pts"));
        if !pts.exists() {
            return Err(CliError::usage(format!("split entry '{entry}': {} does not exist", pts.display())));
        }
        return Ok(ShapeRef { category: category.into(), id: id.into(), pts });
    }
    let hits: Vec<&String> = cats.iter().filter(|c| root.join(c).join(format!("{entry}.pts")).exists()).collect();
    match hits[..] {
        [c] => Ok(ShapeRef {
            category: c.clone(),
            id: entry.into(),
            pts: root.join(c).join(format!("{entry}.pts")),
        }),
        [] => Err(CliError::usage(format!("split entry '{entry}' not found under {}", root.display()))),
        _ => Err(CliError::usage(format!("split entry '{entry}' is ambiguous; use category/id"))),
    }
}

/// The shapes listed in a split file, in file order.
pub fn read_split(root: &Path, split: &Path) -> Result<Vec<ShapeRef>> {
    let text = fs::read_to_string(split).with_context(|| format!("reading {}", split.display()))?;
    let cats = categories(root)?;
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| resolve(root, &cats, l))
        .collect()
}

pub fn train_shapes(cfg: &RunConfig) -> Result<Vec<ShapeRef>> {
    read_split(&cfg.root, &cfg.train_split)
}

pub fn test_shapes(cfg: &RunConfig) -> Result<Vec<ShapeRef>> {
    read_split(&cfg.root, &cfg.test_split)
}

/// Every shape of both splits, deduplicated, sorted by key.
pub fn all_shapes(cfg: &RunConfig) -> Result<Vec<ShapeRef>> {
    let mut all = train_shapes(cfg)?;
    all.extend(test_shapes(cfg)?);
    all.sort();
    all.dedup();
    Ok(all)
}

pub struct Artifacts<'a> {
    pub out: &'a Path,
}

impl Artifacts<'_> {
    pub fn basis(&self, r: &ShapeRef) -> PathBuf {
        self.out.join("bases").join(&r.category).join(format!("{}.basis", r.id))
    }

    pub fn basis_hash(&self, r: &ShapeRef) -> PathBuf {
        self.out.join("bases").join(&r.category).join(format!("{}.sha256", r.id))
    }

    pub fn fmap(&self, r: &ShapeRef) -> PathBuf {
        self.out.join("fmaps").join(&r.category).join(format!("{}.fmap", r.id))
    }

    pub fn average(&self) -> PathBuf {
        self.out.join("average.avg")
    }

    pub fn spectn_checkpoint(&self) -> PathBuf {
        self.out.join("spectn.ckpt")
    }

    pub fn model_checkpoint(&self) -> PathBuf {
        self.out.join("model.ckpt")
    }
}

/// Content hash of everything a shape's basis depends on.
pub fn basis_hash(cfg: &RunConfig, r: &ShapeRef) -> Result<String> {
    let mut h = Sha256::new();
    h.update(fs::read(&r.pts).with_context(|| format!("reading {}", r.pts.display()))?);
    h.update(format!(
        "|k={}|m={}|dense={}|tol={}|iter={}|deg={}|guard={}|seed={}",
        cfg.k,
        cfg.m,
        cfg.eigen.dense_threshold,
        cfg.eigen.tolerance,
        cfg.eigen.max_iterations,
        cfg.eigen.filter_degree,
        cfg.eigen.guard_vectors,
        cfg.eigen.seed
    ));
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Writes `shapes` under `root` in the dataset layout, one category per
/// synthetic kind, and returns their `category/id` keys.
pub fn write_shapes(root: &Path, shapes: &[SyntheticShape]) -> Result<Vec<String>> {
    let mut keys = Vec::new();
    for s in shapes {
        let dir = root.join(s.kind.name());
        let pts = dir.join(format!("{}.pts", s.id));
        formats::write_pts(&pts, s.cloud.points())?;
        if let Some(l) = s.cloud.labels() {
            formats::write_ints(&pts.with_extension("seg"), l)?;
        }
        if let Some(n) = s.cloud.normals() {
            formats::write_nrm(&pts.with_extension("nrm"), n)?;
        }
        formats::write_ints(&pts.with_extension("kp"), &s.keypoints)?;
        keys.push(format!("{}/{}", s.kind.name(), s.id));
    }
    Ok(keys)
}

/// A two-split synthetic dataset under `root` with `train.txt` and
/// `test.txt`.
pub fn write_synthetic_dataset(root: &Path, train: &[SyntheticShape], test: &[SyntheticShape]) -> Result<()> {
    let tr = write_shapes(root, train)?;
    let te = write_shapes(root, test)?;
    formats::write_ints(&root.join("train.txt"), &tr)?;
    formats::write_ints(&root.join("test.txt"), &te)
}

impl ShapeRef {
    pub fn seg(&self) -> PathBuf {
        self.sibling("seg")
    }
}
