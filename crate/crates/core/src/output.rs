//! Text artifacts: CSV tables and JSON documents.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a file
//! parses back to the exact values that produced it.

use std::fmt::Write;

use serde::Serialize;

use crate::collapse::{RunOutcome, TrajectoryRecord};
use crate::detector::DetectorReport;
use crate::ensemble::{EnsembleReport, SweepRow};
use crate::error::{CslError, Result};
use crate::sse::SuperpositionState;

pub const TRAJECTORY_HEADER: &str = "step,time_s,k,Y,dB,a1sq,N_expect,valid";

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text =
        serde_json::to_string_pretty(value).map_err(|e| CslError::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

pub fn outcome_json(outcome: &RunOutcome) -> Result<String> {
    to_json(outcome)
}

pub fn trajectory_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::with_capacity(64 * (record.rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in &record.rows {
        let _ = writeln!(
            out,
            "{},{:e},{},{},{:e},{},{},{}",
            r.step, r.time, r.generation, r.pair_count, r.db, r.a1sq, r.n_expect, r.valid
        );
    }
    out
}

/// One row per generation, in the layout of a per-generation sign table.
pub fn generation_csv(record: &TrajectoryRecord) -> String {
    let mut out = String::from("k,T_k,sign_sum,Y,a1sq,redraws\n");
    for g in &record.generations {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            g.generation, g.steps, g.sign_sum, g.pair_count, g.a1sq, g.redraws
        );
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-class table of an ensemble report.
pub fn report_csv(report: &EnsembleReport) -> String {
    let mut out = String::from("outcome,count,fraction,mean_N_expect,mean_final_a1sq\n");
    for c in &report.classes {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            c.outcome,
            c.count,
            c.fraction,
            opt(c.mean_n_expect),
            opt(c.mean_final_a1sq)
        );
    }
    out
}

pub fn histogram_csv(report: &EnsembleReport) -> String {
    let bins = report.histogram.len();
    let mut out = String::from("bin_lo,bin_hi,count\n");
    for (i, count) in report.histogram.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{}",
            i as f64 / bins as f64,
            (i + 1) as f64 / bins as f64,
            count
        );
    }
    out
}

pub const SWEEP_HEADER: &str =
    "axis,value,trials,completed,click,silent,indeterminate,validity_stop,\
click_fraction,click_fraction_se,born_deviation,mean_final_a1sq,mean_redraws,max_redraws,error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        let _ = write!(out, "{},{}", row.axis.as_str(), row.value);
        match (&row.report, &row.error) {
            (Some(r), _) => {
                let _ = writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{},{},{},{},{},",
                    r.trials,
                    r.completed,
                    r.counts.click,
                    r.counts.silent,
                    r.counts.indeterminate,
                    r.counts.validity_stop,
                    r.click_fraction,
                    r.click_fraction_se,
                    r.born_deviation,
                    r.mean_final_a1sq,
                    r.mean_redraws,
                    r.max_redraws
                );
            }
            (None, err) => {
                let msg = err.as_deref().unwrap_or("").replace(['"', ','], " ");
                let _ = writeln!(out, ",,,,,,,,,,,,,\"{msg}\"");
            }
        }
    }
    out
}

/// `states` includes the initial state, so it is one longer than `increments`.
pub fn single_system_csv(
    states: &[SuperpositionState],
    increments: &[f64],
    dt: f64,
) -> Result<String> {
    if states.len() != increments.len() + 1 {
        return Err(CslError::State(format!(
            "{} states for {} increments",
            states.len(),
            increments.len()
        )));
    }
    let branches = states.first().map_or(0, SuperpositionState::len);
    let mut out = String::from("step,time_s,dB");
    for m in 0..branches {
        let _ = write!(out, ",p{m}");
    }
    out.push('\n');
    for (step, state) in states.iter().enumerate() {
        let db = if step == 0 { 0.0 } else { increments[step - 1] };
        let _ = write!(out, "{},{:e},{:e}", step, step as f64 * dt, db);
        for p in state.probabilities() {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Plain-text summary of a counter, with the per-generation step table.
pub fn detector_text(report: &DetectorReport) -> String {
    let g = &report.geometry;
    let mut out = String::new();
    let _ = writeln!(out, "gas                 {}", g.gas_label);
    let _ = writeln!(
        out,
        "a, b                {} cm, {} cm",
        g.anode_radius, g.cathode_radius
    );
    let _ = writeln!(out, "V0                  {} V", g.voltage);
    let _ = writeln!(out, "potential drop      {:.4} V", report.potential_drop);
    if let Some(d) = report.diethorn_drop {
        let _ = writeln!(out, "Diethorn formula    {d:.4} V");
    }
    let _ = writeln!(out, "drop / dV           {:.4}", report.drop_over_delta_v);
    let _ = writeln!(out, "generations         {}", report.generations);
    let _ = writeln!(out, "multiplication      {}", report.multiplication_factor);
    let _ = writeln!(
        out,
        "avalanche radius    {:.6} cm",
        report.avalanche_radius_cm
    );
    let _ = writeln!(out, "radius ratio        {:.6}", report.radius_ratio);
    let _ = writeln!(
        out,
        "velocity coeff.     {:.4e} cm/s (from constants {:.4e})",
        report.velocity_coefficient, report.velocity_coefficient_from_constants
    );
    let s = &report.schedule;
    let _ = writeln!(out, "\nk  Y        T_k (ps)   steps");
    for (i, ((y, t), n)) in s.pair_counts.iter().zip(&s.times).zip(&s.steps).enumerate() {
        let _ = writeln!(out, "{:<2} {:<8} {:<10.4} {}", i + 1, y, t * 1e12, n);
    }
    let _ = writeln!(out, "total steps {}", s.total_steps());
    out
}
