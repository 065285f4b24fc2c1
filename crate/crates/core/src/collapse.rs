//! Detector-branch collapse dynamics.
//!
//! The particle state is `a₁|Ψ₁⟩ + a₂|Ψ₂⟩ + a₃|Ψ₃⟩` with a detector on
//! branch 1 only. Summing the projected equation over the detector's Fock
//! ladder leaves a closed equation for `x = |a₁|²`:
//!
//! ```text
//! dx = 2 (1 − x) Y x dB
//! ```
//!
//! where `Y` is the pair count branch 1 would show. `Y` is piecewise constant
//! per avalanche generation and supplied by an [`AvalancheSchedule`].
//!
//! An Euler step of this equation can leave `[0, 1]` when `|2Y dB|` is
//! large, so each step is checked first: a negative step must satisfy
//! `|2Y(1 − x)dB| < 1` and a positive one `2Y x dB < 1`.

use serde::{Deserialize, Serialize};

use crate::detector::AvalancheSchedule;
use crate::error::{CslError, Result};
use crate::noise::NoiseStream;

pub const DEFAULT_CLICK_THRESHOLD: f64 = 0.99;
pub const DEFAULT_SILENT_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_MAX_REDRAWS: u32 = 10_000;

/// `2(1 − x)·Y·x·dB`
pub fn branch_step(a1sq: f64, y: f64, db: f64) -> f64 {
    2.0 * (1.0 - a1sq) * y * a1sq * db
}

/// `⟨N̂⟩ = |a₁|²·Y`
pub fn expectation_pairs(a1sq: f64, y: f64) -> f64 {
    a1sq * y
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    /// The step would drive `|a₁|²` below zero.
    NegativeRisk,
    /// The step would drive `|a₁|²` above one.
    OvershootRisk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub status: Validity,
    /// `2·Y·dB`
    pub two_y_db: f64,
    /// Whether `−1 < 2Y·dB < 2` holds.
    pub within_summary_bound: bool,
}

/// Classifies one prospective step. The fixed points `x = 0` and `x = 1` do
/// not move under any increment and are never flagged.
pub fn validity_check(a1sq: f64, y: f64, db: f64) -> ValidityReport {
    let two_y_db = 2.0 * y * db;
    let status = if db < 0.0 && a1sq > 0.0 && (two_y_db * (1.0 - a1sq)).abs() >= 1.0 {
        Validity::NegativeRisk
    } else if db > 0.0 && a1sq < 1.0 && two_y_db * a1sq >= 1.0 {
        Validity::OvershootRisk
    } else {
        Validity::Valid
    };
    ValidityReport {
        status,
        two_y_db,
        within_summary_bound: two_y_db > -1.0 && two_y_db < 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    /// Stop the run at the first invalid step.
    #[default]
    Strict,
    /// Draw a fresh increment for an invalid step until one is valid. For a
    /// recorded stream this consumes the following recorded values.
    Guarded,
}

impl std::str::FromStr for Policy {
    type Err = CslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "strict" => Ok(Self::Strict),
            "guarded" => Ok(Self::Guarded),
            other => Err(CslError::Config(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub silent: f64,
    pub click: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            silent: DEFAULT_SILENT_THRESHOLD,
            click: DEFAULT_CLICK_THRESHOLD,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.silent && self.silent < self.click && self.click < 1.0 {
            Ok(())
        } else {
            Err(CslError::Thresholds {
                silent: self.silent,
                click: self.click,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeClass {
    Click,
    Silent,
    Indeterminate,
    ValidityStop,
}

impl OutcomeClass {
    pub const ALL: [OutcomeClass; 4] = [
        OutcomeClass::Click,
        OutcomeClass::Silent,
        OutcomeClass::Indeterminate,
        OutcomeClass::ValidityStop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Click => "click",
            Self::Silent => "silent",
            Self::Indeterminate => "indeterminate",
            Self::ValidityStop => "validity_stop",
        }
    }
}

impl std::fmt::Display for OutcomeClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a strict run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// 1-based step index of the rejected step.
    pub step: u64,
    /// 1-based generation.
    pub generation: usize,
    pub status: Validity,
    pub a1sq: f64,
    pub db: f64,
    pub two_y_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    #[serde(rename = "outcome")]
    pub class: OutcomeClass,
    pub final_a1sq: f64,
    #[serde(rename = "final_N_expect")]
    pub final_n_expect: f64,
    pub redraws: u64,
    pub violated_at: Option<Violation>,
}

/// Click / silent / indeterminate from a terminal probability.
pub fn classify_outcome(final_a1sq: f64, thresholds: &Thresholds) -> Result<OutcomeClass> {
    thresholds.validate()?;
    Ok(if final_a1sq >= thresholds.click {
        OutcomeClass::Click
    } else if final_a1sq <= thresholds.silent {
        OutcomeClass::Silent
    } else {
        OutcomeClass::Indeterminate
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    /// 1-based elementary step.
    pub step: u64,
    /// End of the step, s.
    pub time: f64,
    /// 1-based generation.
    pub generation: usize,
    pub pair_count: u64,
    pub db: f64,
    /// `|a₁|²` after the step (unchanged for a rejected step).
    pub a1sq: f64,
    pub n_expect: f64,
    pub valid: bool,
}

/// Per-generation summary, one row of a sign table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub steps: u32,
    /// Σ sign(dB) over the applied increments.
    pub sign_sum: i64,
    pub pair_count: u64,
    /// `|a₁|²` at the end of the generation.
    pub a1sq: f64,
    pub redraws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub initial_a1sq: f64,
    pub rows: Vec<TrajectoryRow>,
    pub generations: Vec<GenerationSummary>,
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionOptions {
    pub policy: Policy,
    pub thresholds: Thresholds,
    pub max_redraws: u32,
    /// Keep per-step rows; ensembles turn this off.
    pub record_rows: bool,
}

impl Default for DetectionOptions {
    fn default() -> Self {
        Self {
            policy: Policy::Strict,
            thresholds: Thresholds::default(),
            max_redraws: DEFAULT_MAX_REDRAWS,
            record_rows: true,
        }
    }
}

/// Integrates `|a₁|²` through every generation of `schedule`, drawing one
/// increment per elementary step from `noise`.
pub fn run_detection(
    schedule: &AvalancheSchedule,
    noise: &mut NoiseStream,
    a1sq0: f64,
    options: &DetectionOptions,
) -> Result<TrajectoryRecord> {
    options.thresholds.validate()?;
    if !(0.0..=1.0).contains(&a1sq0) {
        return Err(CslError::Domain(format!(
            "initial |a1|^2 must lie in [0, 1], got {a1sq0}"
        )));
    }
    if schedule.is_empty() {
        return Err(CslError::Config("avalanche schedule is empty".into()));
    }

    let dt = schedule.dt;
    let mut a1sq = a1sq0;
    let mut step: u64 = 0;
    let mut redraws_total: u64 = 0;
    let capacity = if options.record_rows {
        schedule.total_steps() as usize
    } else {
        0
    };
    let mut rows = Vec::with_capacity(capacity);
    let mut generations = Vec::with_capacity(schedule.generations());
    let mut violation = None;

    'generations: for (k, (&steps, &pairs)) in
        schedule.steps.iter().zip(&schedule.pair_counts).enumerate()
    {
        let generation = k + 1;
        let y = pairs as f64;
        let mut sign_sum = 0i64;
        let mut redraws = 0u64;
        for _ in 0..steps {
            step += 1;
            let mut db = noise.next_increment()?;
            let mut report = validity_check(a1sq, y, db);
            if options.policy == Policy::Guarded {
                let mut attempts = 0u32;
                while report.status != Validity::Valid && attempts < options.max_redraws {
                    db = noise.next_increment()?;
                    report = validity_check(a1sq, y, db);
                    attempts += 1;
                }
                redraws += u64::from(attempts);
            }
            if report.status != Validity::Valid {
                if options.record_rows {
                    rows.push(TrajectoryRow {
                        step,
                        time: step as f64 * dt,
                        generation,
                        pair_count: pairs,
                        db,
                        a1sq,
                        n_expect: expectation_pairs(a1sq, y),
                        valid: false,
                    });
                }
                violation = Some(Violation {
                    step,
                    generation,
                    status: report.status,
                    a1sq,
                    db,
                    two_y_db: report.two_y_db,
                });
                redraws_total += redraws;
                generations.push(GenerationSummary {
                    generation,
                    steps,
                    sign_sum,
                    pair_count: pairs,
                    a1sq,
                    redraws,
                });
                break 'generations;
            }
            a1sq += branch_step(a1sq, y, db);
            sign_sum += if db > 0.0 {
                1
            } else if db < 0.0 {
                -1
            } else {
                0
            };
            if options.record_rows {
                rows.push(TrajectoryRow {
                    step,
                    time: step as f64 * dt,
                    generation,
                    pair_count: pairs,
                    db,
                    a1sq,
                    n_expect: expectation_pairs(a1sq, y),
                    valid: true,
                });
            }
        }
        redraws_total += redraws;
        generations.push(GenerationSummary {
            generation,
            steps,
            sign_sum,
            pair_count: pairs,
            a1sq,
            redraws,
        });
    }

    let last_y = generations
        .last()
        .map(|g| g.pair_count as f64)
        .unwrap_or_default();
    let class = match violation {
        Some(_) => OutcomeClass::ValidityStop,
        None => classify_outcome(a1sq, &options.thresholds)?,
    };
    Ok(TrajectoryRecord {
        initial_a1sq: a1sq0,
        rows,
        generations,
        outcome: RunOutcome {
            class,
            final_a1sq: a1sq,
            final_n_expect: expectation_pairs(a1sq, last_y),
            redraws: redraws_total,
            violated_at: violation,
        },
    })
}
