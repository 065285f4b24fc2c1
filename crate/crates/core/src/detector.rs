//! Avalanche structure of a cylindrical proportional counter.
//!
//! Starting from the Diethorn potential drop across the multiplication
//! region, the cascade is split into generations of pair-producing
//! collisions (PPCs), each one `ΔV` further down the potential. Every free
//! electron is assumed to ionize once per generation with no losses, so
//! generation `k` holds `n₀·2ᵏ` pairs. Radii shrink geometrically towards the
//! anode and the electron flight time across each shell shrinks with them.

use serde::{Deserialize, Serialize};

use crate::error::{CslError, Result};

/// Elementary charge, C.
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Electron rest mass, kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;
/// Electron velocity coefficient used for the reference counter, cm/s.
pub const DEFAULT_VELOCITY_COEFFICIENT: f64 = 1.077e9;

fn default_velocity_coefficient() -> f64 {
    DEFAULT_VELOCITY_COEFFICIENT
}

/// Counter geometry and gas constants. Lengths in cm, potentials in V,
/// pressure in atm, `k` in V/(cm·atm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorGeometry {
    pub anode_radius: f64,
    pub cathode_radius: f64,
    pub voltage: f64,
    pub pressure: f64,
    pub k: f64,
    pub delta_v: f64,
    #[serde(default)]
    pub gas_label: String,
    /// Use this drop (V) instead of evaluating the Diethorn formula. The
    /// formula value is still available from [`diethorn_potential_drop`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential_drop_override: Option<f64>,
    /// cm/s
    #[serde(default = "default_velocity_coefficient")]
    pub velocity_coefficient: f64,
}

impl DetectorGeometry {
    /// 95% Xe / 5% CO₂ counter: a = 80 µm, b = 1 cm, 1750 V, 0.4 atm,
    /// K = 36600 V/(cm·atm), ΔV = 31.4 V. The drop is pinned to
    /// 400.5 V; direct evaluation of the Diethorn formula gives ≈409.4 V,
    /// which would floor to 13 generations instead of 12.
    pub fn reference() -> Self {
        Self {
            potential_drop_override: Some(400.5),
            ..Self::reference_formula()
        }
    }

    /// The reference counter with the drop taken from the formula.
    pub fn reference_formula() -> Self {
        Self {
            anode_radius: 0.008,
            cathode_radius: 1.0,
            voltage: 1750.0,
            pressure: 0.4,
            k: 36_600.0,
            delta_v: 31.4,
            gas_label: "95% Xe + 5% CO2".into(),
            potential_drop_override: None,
            velocity_coefficient: DEFAULT_VELOCITY_COEFFICIENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(CslError::Geometry(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("anode_radius", self.anode_radius)?;
        positive("cathode_radius", self.cathode_radius)?;
        positive("voltage", self.voltage)?;
        positive("pressure", self.pressure)?;
        positive("k", self.k)?;
        positive("delta_v", self.delta_v)?;
        positive("velocity_coefficient", self.velocity_coefficient)?;
        if self.anode_radius >= self.cathode_radius {
            return Err(CslError::Geometry(format!(
                "anode radius {} must be below cathode radius {}",
                self.anode_radius, self.cathode_radius
            )));
        }
        if let Some(drop) = self.potential_drop_override {
            if !(drop.is_finite() && drop >= 0.0 && drop <= self.voltage) {
                return Err(CslError::Geometry(format!(
                    "potential drop override {drop} V outside [0, V0]"
                )));
            }
        }
        Ok(())
    }

    /// ln(b/a)
    pub fn log_radius_ratio(&self) -> f64 {
        (self.cathode_radius / self.anode_radius).ln()
    }

    /// Argument of the outer logarithm in the Diethorn formula.
    pub fn diethorn_argument(&self) -> f64 {
        self.voltage / (self.anode_radius * self.pressure * self.k * self.log_radius_ratio())
    }
}

/// `|V_a − V_1| = V₀/ln(b/a) · ln[V₀ / (a·p·K·ln(b/a))]`, always from the
/// formula (ignores any override).
pub fn diethorn_potential_drop(geom: &DetectorGeometry) -> Result<f64> {
    geom.validate()?;
    let argument = geom.diethorn_argument();
    if argument <= 1.0 {
        return Err(CslError::SubThreshold { argument });
    }
    Ok(geom.voltage / geom.log_radius_ratio() * argument.ln())
}

/// The drop used downstream: the override when present, else the formula.
pub fn potential_drop(geom: &DetectorGeometry) -> Result<f64> {
    geom.validate()?;
    match geom.potential_drop_override {
        Some(drop) => Ok(drop),
        None => diethorn_potential_drop(geom),
    }
}

/// `floor(drop/ΔV)`; zero generations is an error.
pub fn generation_count(geom: &DetectorGeometry) -> Result<u32> {
    let drop = potential_drop(geom)?;
    generations_for_drop(drop, geom.delta_v)
}

pub(crate) fn generations_for_drop(drop: f64, delta_v: f64) -> Result<u32> {
    let n = (drop / delta_v).floor();
    if n < 1.0 {
        return Err(CslError::NoGenerations { drop, delta_v });
    }
    Ok(n as u32)
}

/// `M = 2^generations`.
pub fn multiplication_factor(geom: &DetectorGeometry) -> Result<u64> {
    power_of_two(generation_count(geom)?)
}

fn power_of_two(exp: u32) -> Result<u64> {
    1u64.checked_shl(exp)
        .filter(|_| exp < 64)
        .ok_or(CslError::Overflow(exp))
}

/// Outer radius of the avalanche region, cm. The cathode sits at potential
/// 0 and the anode at V₀, so the region boundary is at `V₀ − drop`.
pub fn avalanche_radius(geom: &DetectorGeometry) -> Result<f64> {
    let drop = potential_drop(geom)?;
    Ok(radius_for_drop(geom, drop))
}

pub(crate) fn radius_for_drop(geom: &DetectorGeometry, drop: f64) -> f64 {
    let boundary_potential = geom.voltage - drop;
    geom.cathode_radius * (-(boundary_potential / geom.voltage) * geom.log_radius_ratio()).exp()
}

/// `r_{k+1}/r_k = exp[−(ΔV/V₀)·ln(b/a)]`.
pub fn radius_ratio(geom: &DetectorGeometry) -> Result<f64> {
    geom.validate()?;
    Ok(ratio_for(geom.delta_v, geom))
}

fn ratio_for(delta_v: f64, geom: &DetectorGeometry) -> f64 {
    (-(delta_v / geom.voltage) * geom.log_radius_ratio()).exp()
}

/// `sqrt(2·V₀·e / (ln(b/a)·m₀))` in cm/s, from physical constants. Compare
/// with the configured `velocity_coefficient`.
pub fn velocity_coefficient_from_constants(geom: &DetectorGeometry) -> Result<f64> {
    geom.validate()?;
    let metres_per_second =
        (2.0 * geom.voltage * ELEMENTARY_CHARGE / (geom.log_radius_ratio() * ELECTRON_MASS)).sqrt();
    Ok(metres_per_second * 100.0)
}

/// Shell radii r₁ … r_K, cm.
pub fn generation_radii(geom: &DetectorGeometry) -> Result<Vec<f64>> {
    let generations = generation_count(geom)?;
    let r1 = avalanche_radius(geom)?;
    let ratio = radius_ratio(geom)?;
    Ok(std::iter::successors(Some(r1), |r| Some(r * ratio))
        .take(generations as usize)
        .collect())
}

/// `Y_k = n₀·2ᵏ`; `k = 0` is the primary ionization alone.
pub fn pair_count(k: u32, n0: u64) -> Result<u64> {
    power_of_two(k)?
        .checked_mul(n0)
        .ok_or(CslError::Overflow(k))
}

/// Per-generation pair counts and flight times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvalancheSchedule {
    pub n0: u64,
    /// `Y_k` for k = 1..=generations.
    pub pair_counts: Vec<u64>,
    /// `T_k`, s.
    pub times: Vec<f64>,
    /// `T_k` in elementary steps.
    pub steps: Vec<u32>,
    /// s
    pub dt: f64,
}

impl AvalancheSchedule {
    /// Builds the schedule from geometry. `T₁ = 2·r₁·sqrt(1 − ratio)/v`,
    /// `T_{k+1} = ratio·T_k`, steps rounded to the nearest integer.
    pub fn from_geometry(geom: &DetectorGeometry, n0: u64, dt: f64) -> Result<Self> {
        check_schedule_inputs(n0, dt)?;
        let generations = generation_count(geom)?;
        let r1 = avalanche_radius(geom)?;
        let ratio = radius_ratio(geom)?;
        let t1 = 2.0 * r1 * (1.0 - ratio).sqrt() / geom.velocity_coefficient;
        let times: Vec<f64> = std::iter::successors(Some(t1), |t| Some(t * ratio))
            .take(generations as usize)
            .collect();
        let steps = times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let n = (t / dt).round();
                if n < 1.0 {
                    Err(CslError::DtTooCoarse {
                        generation: i + 1,
                        seconds: t,
                        dt,
                    })
                } else {
                    Ok(n as u32)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(n0, times, steps, dt)
    }

    /// Explicit per-generation step counts, e.g. to replay a fixed step table.
    pub fn from_steps(n0: u64, steps: Vec<u32>, dt: f64) -> Result<Self> {
        check_schedule_inputs(n0, dt)?;
        if let Some(i) = steps.iter().position(|&s| s == 0) {
            return Err(CslError::Config(format!(
                "generation {} has zero steps",
                i + 1
            )));
        }
        let times = steps.iter().map(|&s| f64::from(s) * dt).collect();
        Self::assemble(n0, times, steps, dt)
    }

    /// A single generation of constant pair count `y`.
    pub fn constant(y: u64, steps: u32, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(CslError::Domain(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            n0: y,
            pair_counts: vec![y],
            times: vec![f64::from(steps) * dt],
            steps: vec![steps],
            dt,
        })
    }

    fn assemble(n0: u64, times: Vec<f64>, steps: Vec<u32>, dt: f64) -> Result<Self> {
        let pair_counts = (1..=steps.len() as u32)
            .map(|k| pair_count(k, n0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n0,
            pair_counts,
            times,
            steps,
            dt,
        })
    }

    pub fn generations(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn total_steps(&self) -> u64 {
        self.steps.iter().map(|&s| u64::from(s)).sum()
    }

    pub fn total_time(&self) -> f64 {
        self.times.iter().sum()
    }

    pub fn final_pair_count(&self) -> u64 {
        self.pair_counts.last().copied().unwrap_or(0)
    }
}

fn check_schedule_inputs(n0: u64, dt: f64) -> Result<()> {
    if n0 == 0 {
        return Err(CslError::Config("n0 must be at least 1".into()));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CslError::Domain(format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

/// Everything derivable from a geometry, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub geometry: DetectorGeometry,
    /// Drop used downstream, V.
    pub potential_drop: f64,
    /// Drop from the Diethorn formula, V (absent below threshold).
    pub diethorn_drop: Option<f64>,
    pub drop_over_delta_v: f64,
    pub generations: u32,
    pub multiplication_factor: u64,
    pub avalanche_radius_cm: f64,
    pub radius_ratio: f64,
    pub radii_cm: Vec<f64>,
    pub velocity_coefficient: f64,
    pub velocity_coefficient_from_constants: f64,
    pub schedule: AvalancheSchedule,
}

impl DetectorReport {
    pub fn compute(geom: &DetectorGeometry, n0: u64, dt: f64) -> Result<Self> {
        let drop = potential_drop(geom)?;
        Ok(Self {
            geometry: geom.clone(),
            potential_drop: drop,
            diethorn_drop: diethorn_potential_drop(geom).ok(),
            drop_over_delta_v: drop / geom.delta_v,
            generations: generation_count(geom)?,
            multiplication_factor: multiplication_factor(geom)?,
            avalanche_radius_cm: avalanche_radius(geom)?,
            radius_ratio: radius_ratio(geom)?,
            radii_cm: generation_radii(geom)?,
            velocity_coefficient: geom.velocity_coefficient,
            velocity_coefficient_from_constants: velocity_coefficient_from_constants(geom)?,
            schedule: AvalancheSchedule::from_geometry(geom, n0, dt)?,
        })
    }
}
