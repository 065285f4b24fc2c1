use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use csl_core::collapse::Policy;
use csl_core::config::{RunConfig, ScheduleOverride};
use csl_core::ensemble::SweepAxis;
use csl_core::noise::NoiseScheme;

#[derive(Debug, Parser)]
#[command(
    name = "csl-sim",
    version,
    about = "Collapse dynamics in a gas proportional counter"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the derived counter quantities and the avalanche step table.
    DetectorParams(DetectorArgs),
    /// One detection run; the exit code reports the outcome class.
    Simulate(RunArgs),
    /// Many independent runs and their statistics.
    Ensemble(RunArgs),
    /// One ensemble per value of a parameter.
    Sweep(SweepArgs),
    /// Bare single-system dynamics and the decay-time estimate.
    SingleParticle(SingleArgs),
}

/// Flags shared by every command that reads a run config. Each one, when
/// given, replaces the matching config field.
#[derive(Debug, Args)]
pub struct Overrides {
    /// TOML run config.
    #[arg(long, env = "CSL_SIM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub scheme: Option<NoiseScheme>,
    #[arg(long)]
    pub n0: Option<u64>,
    #[arg(long)]
    pub a1sq0: Option<f64>,
    #[arg(long)]
    pub policy: Option<Policy>,
    #[arg(long)]
    pub max_redraws: Option<u32>,
    #[arg(long)]
    pub click_threshold: Option<f64>,
    #[arg(long)]
    pub silent_threshold: Option<f64>,
    /// Comma-separated steps per generation, replacing the geometry.
    #[arg(long, value_delimiter = ',')]
    pub steps: Option<Vec<u32>>,
    /// Recorded sign sequence to replay.
    #[arg(long)]
    pub signs: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = &self.out {
            cfg.output.dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.noise.seed = v;
        }
        if let Some(v) = self.gamma {
            cfg.noise.gamma = v;
        }
        if let Some(v) = self.dt {
            cfg.noise.dt = v;
        }
        if let Some(v) = self.scheme {
            cfg.noise.scheme = v;
        }
        if let Some(v) = self.n0 {
            cfg.n0 = v;
        }
        if let Some(v) = self.a1sq0 {
            cfg.a1sq0 = v;
        }
        if let Some(v) = self.policy {
            cfg.policy = v;
        }
        if let Some(v) = self.max_redraws {
            cfg.max_redraws = v;
        }
        if let Some(v) = self.click_threshold {
            cfg.thresholds.click = v;
        }
        if let Some(v) = self.silent_threshold {
            cfg.thresholds.silent = v;
        }
        if let Some(v) = &self.steps {
            cfg.geometry = None;
            cfg.schedule = Some(ScheduleOverride { steps: v.clone() });
        }
        if let Some(v) = &self.signs {
            cfg.signs = Some(v.clone());
        }
    }
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Evaluate the Diethorn formula even if the config pins the drop.
    #[arg(long)]
    pub formula_drop: bool,
    /// Print JSON instead of the text table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Number of trials (ensemble only).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Skip the per-step trajectory file.
    #[arg(long)]
    pub no_trajectory: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Overrides,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub axis: SweepAxis,
    /// Comma-separated values along the axis.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SingleArgs {
    #[command(flatten)]
    pub common: Overrides,
    /// Comma-separated eigenvalues; defaults to the two-branch {0, 1}.
    #[arg(long, value_delimiter = ',')]
    pub eigenvalues: Option<Vec<f64>>,
    /// Comma-separated initial probabilities.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.5])]
    pub probabilities: Vec<f64>,
    /// Number of elementary steps to integrate.
    #[arg(long, default_value_t = 1000)]
    pub length: usize,
    /// Exponent for the decay-time estimate.
    #[arg(long, default_value_t = -13.0, allow_hyphen_values = true)]
    pub target: f64,
}
