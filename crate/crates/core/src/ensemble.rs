//! Many independent detection runs and their aggregate statistics.
//!
//! Trial `i` draws from ChaCha stream `i` of the base seed, so a trial's
//! noise does not depend on how many trials run or on thread scheduling.
//! Results are collected in trial order and folded sequentially, which keeps
//! the report byte-identical across runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collapse::{
    run_detection, DetectionOptions, OutcomeClass, Policy, Thresholds, TrajectoryRecord,
    DEFAULT_MAX_REDRAWS,
};
use crate::detector::{AvalancheSchedule, DetectorGeometry};
use crate::error::{CslError, Result};
use crate::noise::{NoiseConfig, NoiseStream, SignSequence};
use crate::sse::SuperpositionState;

pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// Where the avalanche schedule comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleSource {
    Geometry(DetectorGeometry),
    /// Explicit per-generation step counts.
    Steps(Vec<u32>),
}

impl ScheduleSource {
    pub fn build(&self, n0: u64, dt: f64) -> Result<AvalancheSchedule> {
        match self {
            Self::Geometry(geom) => AvalancheSchedule::from_geometry(geom, n0, dt),
            Self::Steps(steps) => AvalancheSchedule::from_steps(n0, steps.clone(), dt),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub trials: usize,
    pub base_seed: u64,
    pub noise: NoiseConfig,
    pub schedule: ScheduleSource,
    pub n0: u64,
    pub a1sq0: f64,
    pub thresholds: Thresholds,
    pub policy: Policy,
    pub max_redraws: u32,
    pub histogram_bins: usize,
    /// Replay this sequence in every trial instead of fresh noise.
    pub signs: Option<SignSequence>,
}

impl EnsembleConfig {
    pub fn new(noise: NoiseConfig, schedule: ScheduleSource) -> Self {
        Self {
            trials: 1,
            base_seed: noise.seed,
            noise,
            schedule,
            n0: 10,
            a1sq0: 0.4,
            thresholds: Thresholds::default(),
            policy: Policy::Strict,
            max_redraws: DEFAULT_MAX_REDRAWS,
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            signs: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(CslError::Config("trials must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(CslError::Config("histogram needs at least one bin".into()));
        }
        if !(0.0..=1.0).contains(&self.a1sq0) {
            return Err(CslError::Config(format!(
                "a1sq0 must lie in [0, 1], got {}",
                self.a1sq0
            )));
        }
        self.noise.validate()?;
        self.thresholds.validate()
    }

    fn options(&self) -> DetectionOptions {
        DetectionOptions {
            policy: self.policy,
            thresholds: self.thresholds,
            max_redraws: self.max_redraws,
            record_rows: false,
        }
    }

    /// Noise stream for trial `index`.
    pub fn trial_stream(&self, index: usize) -> Result<NoiseStream> {
        match &self.signs {
            Some(signs) => NoiseStream::from_signs(self.noise, signs),
            None => NoiseStream::partitioned(
                NoiseConfig {
                    seed: self.base_seed,
                    ..self.noise
                },
                index as u64,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub click: usize,
    pub silent: usize,
    pub indeterminate: usize,
    pub validity_stop: usize,
}

impl OutcomeCounts {
    pub fn get(&self, class: OutcomeClass) -> usize {
        match class {
            OutcomeClass::Click => self.click,
            OutcomeClass::Silent => self.silent,
            OutcomeClass::Indeterminate => self.indeterminate,
            OutcomeClass::ValidityStop => self.validity_stop,
        }
    }

    fn bump(&mut self, class: OutcomeClass) {
        match class {
            OutcomeClass::Click => self.click += 1,
            OutcomeClass::Silent => self.silent += 1,
            OutcomeClass::Indeterminate => self.indeterminate += 1,
            OutcomeClass::ValidityStop => self.validity_stop += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.click + self.silent + self.indeterminate + self.validity_stop
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub outcome: OutcomeClass,
    pub count: usize,
    pub fraction: f64,
    /// Mean of the final ⟨N̂⟩ over trials of this class.
    pub mean_n_expect: Option<f64>,
    pub mean_final_a1sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub trials: usize,
    pub completed: usize,
    pub a1sq0: f64,
    pub counts: OutcomeCounts,
    pub classes: Vec<ClassStats>,
    pub click_fraction: f64,
    pub click_fraction_se: f64,
    /// `click_fraction − a1sq0`.
    pub born_deviation: f64,
    /// Deviation in units of the binomial standard error at `a1sq0`.
    pub born_z: Option<f64>,
    pub indeterminate_or_stop_fraction: f64,
    pub mean_final_a1sq: f64,
    pub mean_redraws: f64,
    pub max_redraws: u64,
    /// Counts of final `|a₁|²` over uniform bins on [0, 1].
    pub histogram: Vec<u64>,
    pub failures: Vec<TrialFailure>,
}

impl EnsembleReport {
    pub fn fraction(&self, class: OutcomeClass) -> f64 {
        if self.completed == 0 {
            0.0
        } else {
            self.counts.get(class) as f64 / self.completed as f64
        }
    }
}

fn histogram_bin(x: f64, bins: usize) -> usize {
    ((x.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1)
}

fn aggregate(
    config: &EnsembleConfig,
    results: Vec<std::result::Result<TrajectoryRecord, CslError>>,
) -> EnsembleReport {
    let mut counts = OutcomeCounts::default();
    let mut histogram = vec![0u64; config.histogram_bins];
    let mut failures = Vec::new();
    let mut sum_a1sq = 0.0;
    let mut sum_redraws = 0.0;
    let mut max_redraws = 0u64;
    let mut class_n = [0.0f64; 4];
    let mut class_a = [0.0f64; 4];

    for (trial, result) in results.into_iter().enumerate() {
        match result {
            Ok(record) => {
                let out = &record.outcome;
                counts.bump(out.class);
                let slot = out.class as usize;
                class_n[slot] += out.final_n_expect;
                class_a[slot] += out.final_a1sq;
                sum_a1sq += out.final_a1sq;
                sum_redraws += out.redraws as f64;
                max_redraws = max_redraws.max(out.redraws);
                histogram[histogram_bin(out.final_a1sq, config.histogram_bins)] += 1;
            }
            Err(err) => failures.push(TrialFailure {
                trial,
                error: err.to_string(),
            }),
        }
    }

    let completed = counts.total();
    let n = completed as f64;
    let mean = |sum: f64, count: usize| (count > 0).then(|| sum / count as f64);
    let classes = OutcomeClass::ALL
        .iter()
        .map(|&class| {
            let count = counts.get(class);
            ClassStats {
                outcome: class,
                count,
                fraction: if completed > 0 { count as f64 / n } else { 0.0 },
                mean_n_expect: mean(class_n[class as usize], count),
                mean_final_a1sq: mean(class_a[class as usize], count),
            }
        })
        .collect();

    let click_fraction = if completed > 0 {
        counts.click as f64 / n
    } else {
        0.0
    };
    let click_fraction_se = if completed > 0 {
        (click_fraction * (1.0 - click_fraction) / n).sqrt()
    } else {
        0.0
    };
    let born_deviation = click_fraction - config.a1sq0;
    let born_se = (config.a1sq0 * (1.0 - config.a1sq0) / n).sqrt();
    let born_z = (completed > 0 && born_se > 0.0).then(|| born_deviation / born_se);

    EnsembleReport {
        trials: config.trials,
        completed,
        a1sq0: config.a1sq0,
        counts,
        classes,
        click_fraction,
        click_fraction_se,
        born_deviation,
        born_z,
        indeterminate_or_stop_fraction: if completed > 0 {
            (counts.indeterminate + counts.validity_stop) as f64 / n
        } else {
            0.0
        },
        mean_final_a1sq: if completed > 0 { sum_a1sq / n } else { 0.0 },
        mean_redraws: if completed > 0 { sum_redraws / n } else { 0.0 },
        max_redraws,
        histogram,
        failures,
    }
}

/// Runs every trial (in parallel) and aggregates. A failing trial is listed
/// in `failures`; only configuration errors abort the whole ensemble.
pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleReport> {
    config.validate()?;
    let schedule = config.schedule.build(config.n0, config.noise.dt)?;
    if let Some(signs) = &config.signs {
        signs.check_blocks(&schedule.steps)?;
    }
    let options = config.options();
    let results: Vec<_> = (0..config.trials)
        .into_par_iter()
        .map(|i| {
            let mut noise = config.trial_stream(i)?;
            run_detection(&schedule, &mut noise, config.a1sq0, &options)
        })
        .collect();
    Ok(aggregate(config, results))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleStats {
    pub trials: usize,
    pub steps: u32,
    pub pair_count: u64,
    pub initial: f64,
    pub mean: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub deviation: f64,
}

impl MartingaleStats {
    /// `|mean − initial| ≤ k·SE`; with zero spread the mean must be exact.
    pub fn within(&self, k: f64) -> bool {
        if self.se == 0.0 {
            self.deviation == 0.0
        } else {
            self.deviation.abs() <= k * self.se
        }
    }
}

/// Ensemble mean of `|a₁|²` after `steps` steps at constant `Y`. Any
/// validity violation aborts the probe.
pub fn martingale_probe_with<F>(
    trials: usize,
    pair_count: u64,
    a1sq0: f64,
    steps: u32,
    dt: f64,
    stream_for: F,
) -> Result<MartingaleStats>
where
    F: Fn(usize) -> Result<NoiseStream> + Sync,
{
    if trials < 2 {
        return Err(CslError::Config(
            "martingale probe needs at least 2 trials".into(),
        ));
    }
    let schedule = AvalancheSchedule::constant(pair_count, steps, dt)?;
    let options = DetectionOptions {
        record_rows: false,
        ..DetectionOptions::default()
    };
    let finals: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut noise = stream_for(i)?;
            let rec = run_detection(&schedule, &mut noise, a1sq0, &options)?;
            match rec.outcome.violated_at {
                Some(v) => Err(CslError::ProbeAborted {
                    trial: i,
                    step: v.step,
                }),
                None => Ok(rec.outcome.final_a1sq),
            }
        })
        .collect::<Result<_>>()?;
    let (mean, se) = mean_and_se(&finals, a1sq0);
    Ok(MartingaleStats {
        trials,
        steps,
        pair_count,
        initial: a1sq0,
        mean,
        se,
        deviation: mean - a1sq0,
    })
}

/// [`martingale_probe_with`] on partitioned pseudorandom streams.
pub fn martingale_probe(
    noise: NoiseConfig,
    trials: usize,
    pair_count: u64,
    a1sq0: f64,
    steps: u32,
) -> Result<MartingaleStats> {
    noise.validate()?;
    martingale_probe_with(trials, pair_count, a1sq0, steps, noise.dt, |i| {
        NoiseStream::partitioned(noise, i as u64)
    })
}

/// Mean and standard error, accumulated as offsets from `origin` so that an
/// ensemble that never moves reports `origin` exactly.
fn mean_and_se(values: &[f64], origin: f64) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values.iter().map(|v| v - origin).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|v| (v - origin - shift).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    (origin + shift, (var / n).sqrt())
}

/// Drift statistics for an ensemble of single-system trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub trials: usize,
    pub steps: usize,
    /// Largest `|p_m(t) − p_m(0)|` seen over all trials, steps and branches.
    pub max_abs_drift: f64,
    pub mean_final: Vec<f64>,
    pub se_final: Vec<f64>,
    /// Largest `|Σp(t+dt) − Σp(t)|` over every step.
    pub max_sum_change: f64,
}

/// Runs `trials` single-system trajectories of `steps` steps each.
pub fn single_system_drift(
    state: &SuperpositionState,
    noise: NoiseConfig,
    trials: usize,
    steps: usize,
) -> Result<DriftStats> {
    if trials < 2 {
        return Err(CslError::Config(
            "drift ensemble needs at least 2 trials".into(),
        ));
    }
    let initial = state.probabilities().to_vec();
    let per_trial: Vec<(Vec<f64>, f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut stream = NoiseStream::partitioned(noise, i as u64)?;
            let mut current = state.clone();
            let mut max_drift = 0.0f64;
            let mut max_sum_change = 0.0f64;
            for _ in 0..steps {
                let before = current.total_probability();
                current = current.step(stream.next_increment()?)?;
                max_sum_change = max_sum_change.max((current.total_probability() - before).abs());
                for (p, p0) in current.probabilities().iter().zip(&initial) {
                    max_drift = max_drift.max((p - p0).abs());
                }
            }
            Ok((current.probabilities().to_vec(), max_drift, max_sum_change))
        })
        .collect::<Result<_>>()?;

    let branches = initial.len();
    let mut mean_final = Vec::with_capacity(branches);
    let mut se_final = Vec::with_capacity(branches);
    for m in 0..branches {
        let column: Vec<f64> = per_trial.iter().map(|(p, _, _)| p[m]).collect();
        let (mean, se) = mean_and_se(&column, initial[m]);
        mean_final.push(mean);
        se_final.push(se);
    }
    Ok(DriftStats {
        trials,
        steps,
        max_abs_drift: per_trial.iter().map(|t| t.1).fold(0.0, f64::max),
        mean_final,
        se_final,
        max_sum_change: per_trial.iter().map(|t| t.2).fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Gamma,
    N0,
    A1sq0,
    Dt,
}

impl SweepAxis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Gamma => "gamma",
            Self::N0 => "n0",
            Self::A1sq0 => "a1sq0",
            Self::Dt => "dt",
        }
    }

    fn apply(&self, base: &EnsembleConfig, value: f64) -> Result<EnsembleConfig> {
        if !value.is_finite() {
            return Err(CslError::Config(format!(
                "sweep value {value} is not finite"
            )));
        }
        let mut cfg = base.clone();
        match self {
            Self::Gamma => cfg.noise.gamma = value,
            Self::Dt => cfg.noise.dt = value,
            Self::A1sq0 => cfg.a1sq0 = value,
            Self::N0 => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(CslError::Config(format!(
                        "n0 must be a positive integer, got {value}"
                    )));
                }
                cfg.n0 = value as u64;
            }
        }
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = CslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gamma" => Ok(Self::Gamma),
            "n0" => Ok(Self::N0),
            "a1sq0" => Ok(Self::A1sq0),
            "dt" => Ok(Self::Dt),
            other => Err(CslError::Config(format!("unknown sweep axis '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub report: Option<EnsembleReport>,
    pub error: Option<String>,
}

/// One ensemble per value along `axis`; a failing value is recorded inline.
pub fn parameter_sweep(base: &EnsembleConfig, axis: SweepAxis, values: &[f64]) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&value| {
            let result = axis.apply(base, value).and_then(|cfg| run_ensemble(&cfg));
            match result {
                Ok(report) => SweepRow {
                    axis,
                    value,
                    report: Some(report),
                    error: None,
                },
                Err(err) => SweepRow {
                    axis,
                    value,
                    report: None,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect()
}
