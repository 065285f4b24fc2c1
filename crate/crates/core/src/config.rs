//! TOML run configuration.
//!
//! Every field has a default, so a minimal file only needs what it changes.
//! `geometry` and `schedule` are mutually exclusive;
//! with neither the reference counter is used. A relative `signs` path is
//! resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::collapse::{DetectionOptions, Policy, Thresholds, DEFAULT_MAX_REDRAWS};
use crate::detector::{AvalancheSchedule, DetectorGeometry};
use crate::ensemble::{EnsembleConfig, ScheduleSource, DEFAULT_HISTOGRAM_BINS};
use crate::error::{CslError, Result};
use crate::noise::{NoiseConfig, SignSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleOverride {
    pub steps: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Directory for run artifacts.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Write every step of a single run, not just the outcome.
    pub trajectory: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            trajectory: true,
        }
    }
}

fn default_n0() -> u64 {
    10
}

fn default_a1sq0() -> f64 {
    0.4
}

fn default_trials() -> usize {
    1
}

fn default_max_redraws() -> u32 {
    DEFAULT_MAX_REDRAWS
}

fn default_bins() -> usize {
    DEFAULT_HISTOGRAM_BINS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_n0")]
    pub n0: u64,
    #[serde(default = "default_a1sq0")]
    pub a1sq0: f64,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default = "default_max_redraws")]
    pub max_redraws: u32,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signs: Option<PathBuf>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<DetectorGeometry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleOverride>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n0: default_n0(),
            a1sq0: default_a1sq0(),
            policy: Policy::default(),
            max_redraws: default_max_redraws(),
            trials: default_trials(),
            histogram_bins: default_bins(),
            signs: None,
            noise: NoiseConfig::default(),
            thresholds: Thresholds::default(),
            geometry: None,
            schedule: None,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CslError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a file, resolving `signs` against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CslError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(signs), Some(dir)) = (&cfg.signs, path.parent()) {
            if signs.is_relative() {
                let joined = dir.join(signs);
                cfg.signs = Some(std::path::absolute(&joined).unwrap_or(joined));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CslError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.geometry.is_some() && self.schedule.is_some() {
            return Err(CslError::Config(
                "give either [geometry] or [schedule], not both".into(),
            ));
        }
        if self.n0 == 0 {
            return Err(CslError::Config("n0 must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.a1sq0) {
            return Err(CslError::Config(format!(
                "a1sq0 must lie in [0, 1], got {}",
                self.a1sq0
            )));
        }
        if self.trials == 0 {
            return Err(CslError::Config("trials must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CslError::Config("histogram_bins must be at least 1".into()));
        }
        if let Some(geom) = &self.geometry {
            geom.validate()?;
        }
        self.noise.validate()?;
        self.thresholds.validate()
    }

    pub fn geometry_or_reference(&self) -> DetectorGeometry {
        self.geometry
            .clone()
            .unwrap_or_else(DetectorGeometry::reference)
    }

    pub fn schedule_source(&self) -> ScheduleSource {
        match &self.schedule {
            Some(s) => ScheduleSource::Steps(s.steps.clone()),
            None => ScheduleSource::Geometry(self.geometry_or_reference()),
        }
    }

    pub fn build_schedule(&self) -> Result<AvalancheSchedule> {
        self.schedule_source().build(self.n0, self.noise.dt)
    }

    pub fn load_signs(&self) -> Result<Option<SignSequence>> {
        let Some(path) = &self.signs else {
            return Ok(None);
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CslError::Config(format!("{}: {e}", path.display())))?;
        SignSequence::parse(&text).map(Some)
    }

    pub fn detection_options(&self) -> DetectionOptions {
        DetectionOptions {
            policy: self.policy,
            thresholds: self.thresholds,
            max_redraws: self.max_redraws,
            record_rows: self.output.trajectory,
        }
    }

    pub fn ensemble_config(&self, signs: Option<SignSequence>) -> EnsembleConfig {
        EnsembleConfig {
            trials: self.trials,
            base_seed: self.noise.seed,
            noise: self.noise,
            schedule: self.schedule_source(),
            n0: self.n0,
            a1sq0: self.a1sq0,
            thresholds: self.thresholds,
            policy: self.policy,
            max_redraws: self.max_redraws,
            histogram_bins: self.histogram_bins,
            signs,
        }
    }
}
