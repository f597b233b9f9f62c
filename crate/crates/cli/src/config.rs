//! Run configuration: a sectioned `key = value` text file.
//!
//! ```text
//! [data]
//! root = data
//! train_split = data/train.txt
//! test_split = data/test.txt
//!
//! [task]
//! kind = segmentation
//! classes = 2
//!
//! [model]
//! preset = paper10
//! width = 50
//! ```
//!
//! Relative paths resolve against the config file's directory. Unknown
//! sections or keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use sscnn_core::autodiff::AdamConfig;
use sscnn_core::eigen::EigenOptions;
use sscnn_core::network::{BnEval, HeadKind, LayerConfig, ModelConfig};
use sscnn_core::spectral::KernelKind;
use sscnn_core::sync::SpecTnConfig;
use sscnn_core::train::{FmapMode, OptimizerKind, TrainConfig};

use crate::error::CliError;

/// Parsed `[section] key = value` text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current = String::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                ini.sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("config line {}: expected 'key = value'", no + 1)))?;
            if current.is_empty() {
                return Err(CliError::usage(format!("config line {}: key outside a [section]", no + 1)));
            }
            let section = ini.sections.entry(current.clone()).or_default();
            if section.insert(key.trim().to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::usage(format!("config line {}: duplicate key '{}'", no + 1, key.trim())));
            }
        }
        Ok(ini)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) {
        self.sections.entry(section.into()).or_default().insert(key.into(), value.into());
    }

    fn reader(&self) -> Reader<'_> {
        Reader { ini: self, used: Default::default() }
    }
}

/// Typed access that remembers which keys were consumed.
struct Reader<'a> {
    ini: &'a Ini,
    used: std::cell::RefCell<Vec<(String, String)>>,
}

impl Reader<'_> {
    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.used.borrow_mut().push((section.into(), key.into()));
        self.ini.sections.get(section)?.get(key).map(String::as_str)
    }

    fn get<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        self.raw(section, key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::usage(format!("[{section}] {key}: cannot parse '{v}'")))
            })
            .transpose()
    }

    fn or<T: FromStr>(&self, section: &str, key: &str, default: T) -> Result<T> {
        Ok(self.get(section, key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(section, key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| CliError::usage(format!("[{section}] {key}: cannot parse '{s}'"))))
                    .collect()
            })
            .transpose()
    }

    fn finish(self) -> Result<()> {
        let used = self.used.into_inner();
        for (section, keys) in &self.ini.sections {
            for key in keys.keys() {
                if !used.iter().any(|(s, k)| s == section && k == key) {
                    return Err(CliError::usage(format!("unknown config key [{section}] {key}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Segmentation,
    Keypoint,
    Normals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Schedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub ortho_weight: f64,
    pub shuffle: bool,
}

impl Schedule {
    pub fn train_config(&self, fmap: FmapMode, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            ortho_weight: self.ortho_weight,
            fmap,
            shuffle: self.shuffle,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub root: PathBuf,
    pub train_split: PathBuf,
    pub test_split: PathBuf,
    pub task: TaskKind,
    /// Neighbours per point in the kNN graph.
    pub k: usize,
    /// Eigenpairs per shape.
    pub m: usize,
    pub eigen: EigenOptions,
    pub model: ModelConfig,
    pub fmap: FmapMode,
    pub train: Schedule,
    pub pretrain: Schedule,
    pub pck_thresholds: Vec<f64>,
    pub ratios: Vec<f64>,
    pub gradcheck_points: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
}

/// Flag values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_ini(&Ini::parse(&text)?, base, overrides)
    }

    pub fn from_ini(ini: &Ini, base: &Path, overrides: &Overrides) -> Result<Self> {
        let r = ini.reader();
        let path = |key: &str| -> Result<PathBuf> {
            let v = r
                .raw("data", key)
                .ok_or_else(|| CliError::usage(format!("[data] {key} is required")))?;
            let p = base.join(v);
            if !p.exists() {
                return Err(CliError::usage(format!("[data] {key}: {} does not exist", p.display())));
            }
            Ok(p)
        };
        let root = path("root")?;
        let train_split = path("train_split")?;
        let test_split = path("test_split")?;

        let (task, head) = match r.or("task", "kind", "segmentation".to_string())?.as_str() {
            "segmentation" => {
                let classes = r.get("task", "classes")?.ok_or_else(|| CliError::usage("[task] classes is required"))?;
                (TaskKind::Segmentation, HeadKind::Segmentation { classes })
            }
            "keypoint" => (TaskKind::Keypoint, HeadKind::Keypoint { keypoints: r.or("task", "keypoints", 5)? }),
            "normals" => (TaskKind::Normals, HeadKind::Normals),
            other => return Err(CliError::usage(format!("[task] kind: unknown task '{other}'"))),
        };

        let defaults = EigenOptions::default();
        let eigen = EigenOptions {
            dense_threshold: r.or("graph", "dense_threshold", defaults.dense_threshold)?,
            tolerance: r.or("graph", "tolerance", defaults.tolerance)?,
            ..defaults
        };
        let k = r.or("graph", "k", 6)?;
        let m = r.or("graph", "m", 100)?;

        let (model, fmap) = read_model(&r, head)?;
        let train = read_schedule(&r, "train", 100, 1e-3, 1e-2)?;
        let pretrain = read_schedule(&r, "pretrain", 100, 1e-3, 1e-2)?;
        let pck_thresholds = r
            .list("eval", "pck_thresholds")?
            .unwrap_or_else(|| (0..=10).map(|i| i as f64 * 0.01).collect());
        let ratios = r.list("eval", "ratios")?.unwrap_or_else(|| vec![1.0, 0.75, 0.5, 0.25]);
        let gradcheck_points = r.or("gradcheck", "points", 30)?;

        let seed = r.or("run", "seed", 0u64)?;
        let jobs = r.or("run", "jobs", 1usize)?;
        let out = base.join(r.or("run", "out", "out".to_string())?);
        r.finish()?;

        let cfg = RunConfig {
            root,
            train_split,
            test_split,
            task,
            k,
            m,
            eigen,
            model,
            fmap,
            train,
            pretrain,
            pck_thresholds,
            ratios,
            gradcheck_points,
            seed: overrides.seed.unwrap_or(seed),
            out: overrides.out.clone().unwrap_or(out),
            jobs: overrides.jobs.unwrap_or(jobs),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::usage(msg));
        if self.k == 0 || self.m == 0 {
            return bad("[graph] k and m must be positive".into());
        }
        if self.jobs == 0 {
            return bad("jobs must be positive".into());
        }
        if self.model.uses_spectn() && self.m < self.model.spectn.k_local {
            return bad(format!("[graph] m = {} is below [spectn] k_local = {}", self.m, self.model.spectn.k_local));
        }
        if !self.model.uses_spectn() && self.fmap != FmapMode::Identity {
            return bad(format!("[model] fmap = {} needs SpecTN blocks", self.fmap.name()));
        }
        if self.pck_thresholds.windows(2).any(|w| w[0] > w[1]) {
            return bad("[eval] pck_thresholds must be ascending".into());
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
            return bad("[eval] ratios must lie in (0, 1]".into());
        }
        for s in [&self.train, &self.pretrain] {
            if s.batch_size == 0 {
                return bad("batch_size must be positive".into());
            }
        }
        self.model.validate().map_err(|e| CliError::usage(format!("[model] {e}")))
    }

    pub fn head(&self) -> HeadKind {
        self.model.head.expect("run configs always have a head")
    }
}

fn read_schedule(r: &Reader, section: &str, epochs: usize, lr: f64, ortho: f64) -> Result<Schedule> {
    let lr = r.or(section, "lr", lr)?;
    let optimizer = match r.or(section, "optimizer", "adam".to_string())?.as_str() {
        "adam" => OptimizerKind::Adam(AdamConfig { lr, ..AdamConfig::default() }),
        "sgd" => OptimizerKind::Sgd { lr },
        other => return Err(CliError::usage(format!("[{section}] optimizer: unknown '{other}'"))),
    };
    Ok(Schedule {
        epochs: r.or(section, "epochs", epochs)?,
        batch_size: r.or(section, "batch_size", 1)?,
        optimizer,
        ortho_weight: r.or(section, "ortho_weight", ortho)?,
        shuffle: r.or(section, "shuffle", true)?,
    })
}

fn read_model(r: &Reader, head: HeadKind) -> Result<(ModelConfig, FmapMode)> {
    let d = SpecTnConfig::default();
    let mut spectn = SpecTnConfig {
        resolution: r.or("spectn", "resolution", d.resolution)?,
        k_local: r.or("spectn", "k_local", d.k_local)?,
        k_canon: r.or("spectn", "k_canon", d.k_canon)?,
        conv1: r.or("spectn", "conv1", d.conv1)?,
        conv2: r.or("spectn", "conv2", d.conv2)?,
        hidden: r.or("spectn", "hidden", d.hidden)?,
    };
    let in_channels = r.or("model", "in_channels", 3)?;
    let width = r.or("model", "width", 50)?;
    let mut model = match r.or("model", "preset", "paper10".to_string())?.as_str() {
        "paper10" => ModelConfig::paper10(width, in_channels, head, spectn),
        "paper10-tiny" => {
            let tiny = ModelConfig::paper10_tiny(in_channels, head);
            // Explicit [spectn] keys still win over the preset's sizes.
            let tiny_spectn = tiny.spectn;
            spectn = SpecTnConfig {
                resolution: r.or("spectn", "resolution", tiny_spectn.resolution)?,
                k_local: r.or("spectn", "k_local", tiny_spectn.k_local)?,
                k_canon: r.or("spectn", "k_canon", tiny_spectn.k_canon)?,
                conv1: r.or("spectn", "conv1", tiny_spectn.conv1)?,
                conv2: r.or("spectn", "conv2", tiny_spectn.conv2)?,
                hidden: r.or("spectn", "hidden", tiny_spectn.hidden)?,
            };
            ModelConfig { spectn, ..tiny }
        }
        "kernel-study" => ModelConfig::kernel_study(width, in_channels, head, true),
        "kernel-study-small" => ModelConfig::kernel_study(width, in_channels, head, false),
        other => return Err(CliError::usage(format!("[model] preset: unknown '{other}'"))),
    };
    model.spectn = spectn;
    if let Some(layers) = r.raw("model", "layers") {
        model.layers = parse_layers(layers)?;
    }
    if let Some(src) = r.list("model", "skip_sources")? {
        model.skip_sources = src;
    }
    if let Some(t) = r.raw("model", "skip_target") {
        model.skip_target = match t {
            "none" => None,
            v => Some(v.parse().map_err(|_| CliError::usage(format!("[model] skip_target: cannot parse '{v}'")))?),
        };
    }
    if let Some(k) = r.raw("model", "kernel") {
        model.kernel = KernelKind::parse(k).ok_or_else(|| CliError::usage(format!("[model] kernel: unknown '{k}'")))?;
    }
    if let Some(b) = r.raw("model", "bn_eval") {
        model.bn_eval = BnEval::parse(b).ok_or_else(|| CliError::usage(format!("[model] bn_eval: unknown '{b}'")))?;
    }
    model.dropout = r.or("model", "dropout", model.dropout)?;
    model.batch_norm = r.or("model", "batch_norm", model.batch_norm)?;
    model.relu = r.or("model", "relu", model.relu)?;
    model.bn_eps = r.or("model", "bn_eps", model.bn_eps)?;
    model.bn_momentum = r.or("model", "bn_momentum", model.bn_momentum)?;
    if let Some(h) = r.raw("model", "head") {
        model.head = Some(parse_head(h)?);
    }
    let default_fmap = if model.uses_spectn() { FmapMode::Learned } else { FmapMode::Identity };
    let fmap = match r.raw("model", "fmap") {
        Some(f) => FmapMode::parse(f).ok_or_else(|| CliError::usage(format!("[model] fmap: unknown '{f}'")))?,
        None => default_fmap,
    };
    Ok((model, fmap))
}

/// `γ:spectn:params:channels` per block, comma separated, e.g.
/// `1:no:7:50, 64:yes:45:100`.
pub fn parse_layers(text: &str) -> Result<Vec<LayerConfig>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|block| {
            let bad = || CliError::usage(format!("[model] layers: malformed block '{block}'"));
            let f: Vec<&str> = block.split(':').collect();
            if f.len() != 4 {
                return Err(bad());
            }
            let spectn = match f[1] {
                "yes" => true,
                "no" => false,
                _ => return Err(bad()),
            };
            Ok(LayerConfig::new(
                f[0].parse().map_err(|_| bad())?,
                spectn,
                f[2].parse().map_err(|_| bad())?,
                f[3].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn format_layers(layers: &[LayerConfig]) -> String {
    layers
        .iter()
        .map(|l| format!("{}:{}:{}:{}", l.dilation, if l.uses_spectn { "yes" } else { "no" }, l.kernel_params, l.out_channels))
        .collect::<Vec<_>>()
        .join(", ")
}

fn format_head(h: HeadKind) -> String {
    match h {
        HeadKind::Segmentation { classes } => format!("segmentation:{classes}"),
        HeadKind::Keypoint { keypoints } => format!("keypoint:{keypoints}"),
        HeadKind::Normals => "normals".into(),
    }
}

fn parse_head(s: &str) -> Result<HeadKind> {
    let bad = || CliError::usage(format!("[model] head: cannot parse '{s}'"));
    let (kind, n) = s.split_once(':').unwrap_or((s, ""));
    Ok(match kind {
        "segmentation" => HeadKind::Segmentation { classes: n.parse().map_err(|_| bad())? },
        "keypoint" => HeadKind::Keypoint { keypoints: n.parse().map_err(|_| bad())? },
        "normals" => HeadKind::Normals,
        _ => return Err(bad()),
    })
}

/// The `[model]` and `[spectn]` sections that reproduce `model` exactly;
/// checkpoints embed this text.
pub fn model_echo(model: &ModelConfig, fmap: FmapMode) -> String {
    let mut s = String::new();
    let skip = model.skip_sources.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    let _ = writeln!(s, "[model]");
    let _ = writeln!(s, "layers = {}", format_layers(&model.layers));
    let _ = writeln!(s, "in_channels = {}", model.in_channels);
    if let Some(h) = model.head {
        let _ = writeln!(s, "head = {}", format_head(h));
    }
    let _ = writeln!(s, "kernel = {}", model.kernel.name());
    let _ = writeln!(s, "dropout = {}", model.dropout);
    let _ = writeln!(s, "skip_sources = {skip}");
    let _ = writeln!(s, "skip_target = {}", model.skip_target.map_or("none".into(), |t| t.to_string()));
    let _ = writeln!(s, "batch_norm = {}", model.batch_norm);
    let _ = writeln!(s, "relu = {}", model.relu);
    let _ = writeln!(s, "bn_eps = {}", model.bn_eps);
    let _ = writeln!(s, "bn_momentum = {}", model.bn_momentum);
    let _ = writeln!(s, "bn_eval = {}", model.bn_eval.name());
    let _ = writeln!(s, "fmap = {}", fmap.name());
    let sp = model.spectn;
    let _ = writeln!(s, "[spectn]");
    for (k, v) in [
        ("resolution", sp.resolution),
        ("k_local", sp.k_local),
        ("k_canon", sp.k_canon),
        ("conv1", sp.conv1),
        ("conv2", sp.conv2),
        ("hidden", sp.hidden),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}

/// Inverse of [`model_echo`].
pub fn parse_model_echo(text: &str) -> Result<(ModelConfig, FmapMode)> {
    let ini = Ini::parse(text)?;
    let r = ini.reader();
    let head = parse_head(r.raw("model", "head").unwrap_or("normals"))?;
    let (model, fmap) = read_model(&r, head).context("checkpoint model config")?;
    r.finish()?;
    Ok((model, fmap))
}
