//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use sscnn_core::spectral::KernelKind;

use crate::commands::{self, KernelPlot};
use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "sscnn", version, about = "Synchronized spectral CNN workflow for point-cloud shapes")]
pub struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for initialization, shuffling, dropout and downsampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for per-shape work.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory for artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute and cache the spectral basis of every shape.
    BuildBasis,
    /// Build the average shape and each shape's precomputed functional map.
    PrecomputeFmap,
    /// Fit SpecTN to the precomputed maps.
    PretrainSpectn,
    /// Train the network on the training split.
    Train,
    /// Evaluate the trained network on the test split.
    Eval,
    /// Predict one shape.
    Predict {
        /// A `.pts` file.
        #[arg(long)]
        shape: PathBuf,
    },
    /// Finite-difference check of every gradient on one small shape.
    Gradcheck,
    /// Export a kernel's spectral profile, and its spatial profile on a basis.
    PlotKernel {
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        /// Comma-separated kernel coefficients.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        omega: Vec<f64>,
        #[arg(long, default_value = "modulated-exp-window")]
        kernel: String,
        /// A `.basis` file for the spatial profile.
        #[arg(long)]
        basis: Option<PathBuf>,
        /// Vertex the spatial profile is centred on.
        #[arg(long, default_value_t = 0)]
        center: usize,
        /// Points of the λ grid over [0, 2].
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Evaluate on randomly downsampled test shapes.
    DownsampleEval {
        /// Comma-separated ratios in (0, 1]; defaults to the config's.
        #[arg(long, value_delimiter = ',')]
        ratios: Option<Vec<f64>>,
    },
}

impl Cli {
    fn run_config(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| CliError::usage("--config is required"))?;
        let overrides = Overrides {
            seed: self.seed,
            jobs: self.jobs,
            out: self.out.clone(),
        };
        RunConfig::load(path, &overrides)
    }

    fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
    }

    pub fn run(&self) -> Result<()> {
        if let Command::PlotKernel { gamma, omega, kernel, basis, center, samples } = &self.command {
            let out = match (&self.out, &self.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => self.run_config()?.out,
                (None, None) => PathBuf::from("out"),
            };
            let kind = KernelKind::parse(kernel).ok_or_else(|| CliError::usage(format!("unknown kernel '{kernel}'")))?;
            let omega = if omega.is_empty() { kind.identity_coefficients(7) } else { omega.clone() };
            let plot = KernelPlot {
                kind,
                dilation: *gamma,
                omega,
                basis: basis.clone(),
                center: *center,
                samples: *samples,
            };
            return commands::plot_kernel(&out, &plot);
        }
        let cfg = self.run_config()?;
        Self::pool(cfg.jobs)?.install(|| match &self.command {
            Command::BuildBasis => commands::build_basis(&cfg),
            Command::PrecomputeFmap => commands::precompute_fmap(&cfg),
            Command::PretrainSpectn => commands::pretrain_spectn(&cfg),
            Command::Train => commands::train_model(&cfg),
            Command::Eval => commands::eval(&cfg),
            Command::Predict { shape } => commands::predict(&cfg, shape).map(|_| ()),
            Command::Gradcheck => commands::gradcheck(&cfg).map(|_| ()),
            Command::DownsampleEval { ratios } => commands::downsample_eval(&cfg, ratios.as_deref().unwrap_or(&cfg.ratios)),
            Command::PlotKernel { .. } => unreachable!(),
        })
    }
}
