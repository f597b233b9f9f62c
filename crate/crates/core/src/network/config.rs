//! Layer tables and model configuration.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::spectral::KernelKind;
use crate::sync::SpecTnConfig;
use crate::{Error, Result};

/// One spectral convolution block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerConfig {
    /// Dilation `γ` of the spectral kernel.
    pub dilation: f64,
    /// Whether the block synchronizes its coefficients through a
    /// functional map before filtering.
    pub uses_spectn: bool,
    /// Learnable kernel coefficients per channel.
    pub kernel_params: usize,
    pub out_channels: usize,
}

impl LayerConfig {
    pub const fn new(dilation: f64, uses_spectn: bool, kernel_params: usize, out_channels: usize) -> Self {
        Self {
            dilation,
            uses_spectn,
            kernel_params,
            out_channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Segmentation { classes: usize },
    /// `keypoints` keypoint classes plus one background class.
    Keypoint { keypoints: usize },
    Normals,
}

impl HeadKind {
    pub fn out_dim(self) -> usize {
        match self {
            HeadKind::Segmentation { classes } => classes,
            HeadKind::Keypoint { keypoints } => keypoints + 1,
            HeadKind::Normals => 3,
        }
    }
}

/// Which statistics batch norm uses at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnEval {
    /// The shape's own per-channel vertex statistics, as in training.
    PerShape,
    /// The running averages accumulated during training.
    Running,
}

impl BnEval {
    pub fn name(self) -> &'static str {
        match self {
            BnEval::PerShape => "per-shape",
            BnEval::Running => "running",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [BnEval::PerShape, BnEval::Running].into_iter().find(|b| b.name() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub layers: Vec<LayerConfig>,
    pub in_channels: usize,
    pub head: Option<HeadKind>,
    /// Kernel family of layers with more than one parameter that do not
    /// use SpecTN.
    pub kernel: KernelKind,
    pub dropout: f64,
    /// 1-based layers whose activations are concatenated onto the input of
    /// `skip_target`'s 1×1 convolution.
    pub skip_sources: Vec<usize>,
    pub skip_target: Option<usize>,
    pub batch_norm: bool,
    pub relu: bool,
    pub bn_eps: f64,
    pub bn_momentum: f64,
    pub bn_eval: BnEval,
    pub spectn: SpecTnConfig,
}

/// The architecture table: dilation, SpecTN usage, kernel parameters and
/// output channels (in units of `c`) for the ten blocks.
const PAPER10: [(f64, bool, usize, usize); 10] = [
    (1.0, false, 7, 1),
    (1.0, false, 1, 1),
    (4.0, false, 7, 1),
    (4.0, false, 1, 1),
    (16.0, false, 7, 2),
    (16.0, false, 1, 2),
    (64.0, true, 45, 2),
    (64.0, true, 45, 2),
    (1.0, false, 7, 2),
    (1.0, false, 1, 2),
];

impl ModelConfig {
    fn base(layers: Vec<LayerConfig>, in_channels: usize, head: Option<HeadKind>, spectn: SpecTnConfig) -> Self {
        Self {
            layers,
            in_channels,
            head,
            kernel: KernelKind::ModulatedExpWindow,
            dropout: 0.2,
            skip_sources: Vec::new(),
            skip_target: None,
            batch_norm: true,
            relu: true,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
            bn_eval: BnEval::PerShape,
            spectn,
        }
    }

    /// The ten-block network with base width `c`. Blocks 7–8 use
    /// `spectn.k_canon` free multipliers; skip links feed blocks 2, 4, 6
    /// and 8 into block 9.
    pub fn paper10(c: usize, in_channels: usize, head: HeadKind, spectn: SpecTnConfig) -> Self {
        let layers = PAPER10
            .iter()
            .map(|&(g, s, p, w)| LayerConfig::new(g, s, if s { spectn.k_canon } else { p }, w * c))
            .collect();
        let mut cfg = Self::base(layers, in_channels, Some(head), spectn);
        cfg.skip_sources = vec![2, 4, 6, 8];
        cfg.skip_target = Some(9);
        cfg
    }

    /// [`paper10`](Self::paper10) at `c = 4` with a small synchronized
    /// domain and an 8³ SpecTN grid, sized for exhaustive gradient checks.
    pub fn paper10_tiny(in_channels: usize, head: HeadKind) -> Self {
        let spectn = SpecTnConfig {
            resolution: 8,
            k_local: 6,
            k_canon: 12,
            conv1: 2,
            conv2: 3,
            hidden: 5,
        };
        Self::paper10(4, in_channels, head, spectn)
    }

    /// The kernel-comparison network: the ten-block table without blocks
    /// 7–8. With `multiscale = false` every dilation is 1.
    pub fn kernel_study(c: usize, in_channels: usize, head: HeadKind, multiscale: bool) -> Self {
        let layers = PAPER10
            .iter()
            .filter(|row| !row.1)
            .map(|&(g, _, p, w)| LayerConfig::new(if multiscale { g } else { 1.0 }, false, p, w * c))
            .collect();
        let mut cfg = Self::base(layers, in_channels, Some(head), SpecTnConfig::default());
        cfg.skip_sources = vec![2, 4, 6];
        cfg.skip_target = Some(7);
        cfg
    }

    /// One block, seven-parameter kernel, no normalization, activation,
    /// dropout or head: a purely linear filter followed by a 1×1 mix.
    pub fn linear(channels: usize) -> Self {
        let mut cfg = Self::base(
            vec![LayerConfig::new(1.0, false, 7, channels)],
            channels,
            None,
            SpecTnConfig::default(),
        );
        cfg.dropout = 0.0;
        cfg.batch_norm = false;
        cfg.relu = false;
        cfg
    }

    pub fn uses_spectn(&self) -> bool {
        self.layers.iter().any(|l| l.uses_spectn)
    }

    /// Kernel family of block `l` (0-based).
    pub fn layer_kernel(&self, l: usize) -> KernelKind {
        let layer = &self.layers[l];
        if layer.uses_spectn {
            KernelKind::Free
        } else if layer.kernel_params == 1 {
            KernelKind::Constant
        } else {
            self.kernel
        }
    }

    /// Input channels of block `l`'s spectral filter.
    pub fn layer_in_channels(&self, l: usize) -> usize {
        if l == 0 {
            self.in_channels
        } else {
            self.layers[l - 1].out_channels
        }
    }

    /// Input width of block `l`'s 1×1 convolution, including skip links.
    pub fn mix_in_channels(&self, l: usize) -> usize {
        let mut c = self.layer_in_channels(l);
        if self.skip_target == Some(l + 1) {
            c += self
                .skip_sources
                .iter()
                .map(|&s| self.layers[s - 1].out_channels)
                .sum::<usize>();
        }
        c
    }

    pub fn out_channels(&self) -> usize {
        match self.head {
            Some(h) => h.out_dim(),
            None => self.layers.last().map_or(self.in_channels, |l| l.out_channels),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        if self.in_channels == 0 {
            return bad("input channel count must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return bad("batch-norm eps must be > 0 and momentum in [0, 1]".into());
        }
        for (i, l) in self.layers.iter().enumerate() {
            if !(l.dilation > 0.0 && l.dilation.is_finite()) {
                return bad(format!("layer {}: dilation must be > 0", i + 1));
            }
            if l.out_channels == 0 || l.kernel_params == 0 {
                return bad(format!("layer {}: channels and kernel params must be positive", i + 1));
            }
            if l.uses_spectn && l.kernel_params != self.spectn.k_canon {
                return bad(format!(
                    "layer {}: SpecTN layers need {} kernel params (one per canonical basis), got {}",
                    i + 1,
                    self.spectn.k_canon,
                    l.kernel_params
                ));
            }
            if !l.uses_spectn {
                self.layer_kernel(i).validate_len(l.kernel_params)?;
            }
        }
        if self.uses_spectn() {
            self.spectn.validate()?;
        }
        match self.skip_target {
            None if !self.skip_sources.is_empty() => return bad("skip sources given without a target".into()),
            Some(t) if t == 0 || t > self.layers.len() => return bad(format!("skip target {t} out of range")),
            Some(t) => {
                if let Some(&s) = self.skip_sources.iter().find(|&&s| s == 0 || s >= t) {
                    return bad(format!("skip source {s} must precede target {t}"));
                }
            }
            None => {}
        }
        if let Some(h) = self.head {
            if h.out_dim() == 0 {
                return bad("head must have at least one output".into());
            }
        }
        Ok(())
    }
}

const ROW_NAMES: [&str; 5] = ["Layer", "Dilation", "SpecTN", "KernelParams", "OutChannels"];

fn fmt_dilation(g: f64) -> String {
    if g == crate::math::round(g) && g.abs() < 1e15 {
        format!("{}", g as i64)
    } else {
        format!("{g}")
    }
}

/// Renders the layer table with one row per attribute and one column per
/// block.
pub fn describe(layers: &[LayerConfig]) -> String {
    let mut cols: Vec<[String; 5]> = vec![ROW_NAMES.map(String::from)];
    for (i, l) in layers.iter().enumerate() {
        cols.push([
            format!("{}", i + 1),
            fmt_dilation(l.dilation),
            String::from(if l.uses_spectn { "Yes" } else { "No" }),
            format!("{}", l.kernel_params),
            format!("{}", l.out_channels),
        ]);
    }
    let widths: Vec<usize> = cols.iter().map(|c| c.iter().map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    let rows = if layers.is_empty() { 1 } else { 5 };
    for r in 0..rows {
        let mut line = String::new();
        for (c, w) in cols.iter().zip(&widths) {
            if !line.is_empty() {
                line.push_str("  ");
            }
            let _ = write!(line, "{:<w$}", c[r], w = *w);
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Inverse of [`describe`].
pub fn parse_layer_table(text: &str) -> Result<Vec<LayerConfig>> {
    let bad = |msg: String| Error::BadSpec(msg);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().collect())
        .collect();
    let first = rows.first().ok_or_else(|| bad("empty layer table".into()))?;
    if first[0] != ROW_NAMES[0] {
        return Err(bad(format!("layer table must start with '{}'", ROW_NAMES[0])));
    }
    let n = first.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    if rows.len() != 5 {
        return Err(bad(format!("layer table needs 5 rows, found {}", rows.len())));
    }
    for (r, name) in rows.iter().zip(ROW_NAMES) {
        if r[0] != name || r.len() != n + 1 {
            return Err(bad(format!("malformed layer table row '{name}'")));
        }
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer '{s}'")));
    (0..n)
        .map(|i| {
            let dilation = rows[1][i + 1]
                .parse::<f64>()
                .map_err(|_| bad(format!("bad dilation '{}'", rows[1][i + 1])))?;
            let uses_spectn = match rows[2][i + 1] {
                "Yes" => true,
                "No" => false,
                other => return Err(bad(format!("SpecTN must be Yes/No, got '{other}'"))),
            };
            Ok(LayerConfig::new(
                dilation,
                uses_spectn,
                num(rows[3][i + 1])?,
                num(rows[4][i + 1])?,
            ))
        })
        .collect()
}
