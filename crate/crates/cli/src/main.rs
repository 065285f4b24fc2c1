//! `csl-sim`: command-line driver.
//!
//! Exit codes: 0 click, 1 silent, 2 indeterminate, 3 validity stop (for
//! `simulate`; other commands use 0 on success), 4 bad usage or config,
//! 5 runtime failure.

mod args;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde::Serialize;
use sha2::{Digest, Sha256};

use csl_core::collapse::{run_detection, OutcomeClass};
use csl_core::config::RunConfig;
use csl_core::detector::DetectorReport;
use csl_core::ensemble::{parameter_sweep, run_ensemble};
use csl_core::noise::NoiseStream;
use csl_core::output;
use csl_core::sse::{decay_time_bound, simulate, SuperpositionState};
use csl_core::CslError;

use args::{Cli, Command, DetectorArgs, Overrides, RunArgs, SingleArgs, SweepArgs};

const EXIT_USAGE: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

fn outcome_code(class: OutcomeClass) -> u8 {
    match class {
        OutcomeClass::Click => 0,
        OutcomeClass::Silent => 1,
        OutcomeClass::Indeterminate => 2,
        OutcomeClass::ValidityStop => 3,
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a RunConfig,
}

fn load_config(common: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    common.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Creates the output directory (if configured) and records the manifest.
fn prepare_output(cfg: &RunConfig, command: &str) -> Result<Option<PathBuf>> {
    let Some(dir) = cfg.output.dir.clone() else {
        return Ok(None);
    };
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let text = cfg.to_toml_string()?;
    // The hash covers what determines the results, not where they go.
    let physics = RunConfig {
        output: Default::default(),
        ..cfg.clone()
    };
    let hashed = physics.to_toml_string()?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.noise.seed,
        config_sha256: hex::encode(Sha256::digest(hashed.as_bytes())),
        config: cfg,
    };
    write(&dir, "manifest.json", &output::to_json(&manifest)?)?;
    write(&dir, "config.toml", &text)?;
    Ok(Some(dir))
}

fn detector_params(a: &DetectorArgs) -> Result<u8> {
    let cfg = load_config(&a.common)?;
    let mut geom = cfg.geometry_or_reference();
    if a.formula_drop {
        geom.potential_drop_override = None;
    }
    let report = DetectorReport::compute(&geom, cfg.n0, cfg.noise.dt)?;
    let json = output::to_json(&report)?;
    if a.json {
        print!("{json}");
    } else {
        print!("{}", output::detector_text(&report));
    }
    if let Some(dir) = prepare_output(&cfg, "detector-params")? {
        write(&dir, "detector.json", &json)?;
    }
    Ok(0)
}

fn simulate_cmd(a: &RunArgs) -> Result<u8> {
    let mut cfg = load_config(&a.common)?;
    if a.no_trajectory {
        cfg.output.trajectory = false;
    }
    let schedule = cfg.build_schedule()?;
    let mut noise = match cfg.load_signs()? {
        Some(signs) => {
            signs.check_blocks(&schedule.steps)?;
            NoiseStream::from_signs(cfg.noise, &signs)?
        }
        None => NoiseStream::pseudorandom(cfg.noise)?,
    };
    let record = run_detection(&schedule, &mut noise, cfg.a1sq0, &cfg.detection_options())?;
    let out = &record.outcome;
    println!(
        "outcome {} final_a1sq {} final_N_expect {} redraws {}",
        out.class, out.final_a1sq, out.final_n_expect, out.redraws
    );
    if let Some(v) = &out.violated_at {
        println!(
            "validity stop at step {} (generation {}): {:?}, 2YdB = {}",
            v.step, v.generation, v.status, v.two_y_db
        );
    }
    if let Some(dir) = prepare_output(&cfg, "simulate")? {
        write(&dir, "outcome.json", &output::outcome_json(out)?)?;
        write(&dir, "generations.csv", &output::generation_csv(&record))?;
        if cfg.output.trajectory {
            write(&dir, "trajectory.csv", &output::trajectory_csv(&record))?;
        }
    }
    Ok(outcome_code(out.class))
}

fn ensemble_cmd(a: &RunArgs) -> Result<u8> {
    let mut cfg = load_config(&a.common)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let report = run_ensemble(&cfg.ensemble_config(cfg.load_signs()?))?;
    let c = &report.counts;
    println!(
        "trials {} completed {} click {} silent {} indeterminate {} validity_stop {}",
        report.trials, report.completed, c.click, c.silent, c.indeterminate, c.validity_stop
    );
    println!(
        "click fraction {:.6} ± {:.6}, deviation from a1sq0 {:+.6}",
        report.click_fraction, report.click_fraction_se, report.born_deviation
    );
    if !report.failures.is_empty() {
        eprintln!(
            "{} trials failed; first: {}",
            report.failures.len(),
            report.failures[0].error
        );
    }
    if let Some(dir) = prepare_output(&cfg, "ensemble")? {
        write(&dir, "report.json", &output::to_json(&report)?)?;
        write(&dir, "report.csv", &output::report_csv(&report))?;
        write(&dir, "histogram.csv", &output::histogram_csv(&report))?;
    }
    Ok(0)
}

fn sweep_cmd(a: &SweepArgs) -> Result<u8> {
    let mut cfg = load_config(&a.common)?;
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let rows = parameter_sweep(&cfg.ensemble_config(cfg.load_signs()?), a.axis, &a.values);
    let csv = output::sweep_csv(&rows);
    print!("{csv}");
    if let Some(dir) = prepare_output(&cfg, "sweep")? {
        write(&dir, "sweep.csv", &csv)?;
        write(&dir, "sweep.json", &output::to_json(&rows)?)?;
    }
    Ok(0)
}

fn single_particle(a: &SingleArgs) -> Result<u8> {
    let cfg = load_config(&a.common)?;
    let eigenvalues = a
        .eigenvalues
        .clone()
        .unwrap_or_else(|| (0..a.probabilities.len()).map(|m| m as f64).collect());
    let state = SuperpositionState::new(eigenvalues, a.probabilities.clone())?;
    let estimate = decay_time_bound(a.target, cfg.noise.magnitude(), cfg.noise.dt)?;
    println!(
        "exponent {} needs {} steps = {:e} s (suppression {:e})",
        a.target,
        estimate.steps,
        estimate.duration,
        estimate.suppression_factor()
    );
    let increments = NoiseStream::pseudorandom(cfg.noise)?.take(a.length)?;
    let mut noise = NoiseStream::recorded(cfg.noise, increments.clone())?;
    let states = simulate(&state, &mut noise, a.length)?;
    let last = states.last().expect("initial state is always present");
    println!("after {} steps: p = {:?}", a.length, last.probabilities());
    if let Some(dir) = prepare_output(&cfg, "single-particle")? {
        write(
            &dir,
            "single.csv",
            &output::single_system_csv(&states, &increments, cfg.noise.dt)?,
        )?;
        write(&dir, "decay.json", &output::to_json(&estimate)?)?;
    }
    Ok(0)
}

fn is_usage_error(err: &anyhow::Error) -> bool {
    matches!(
        err.downcast_ref::<CslError>(),
        Some(
            CslError::Config(_)
                | CslError::NoiseConfig(_)
                | CslError::Thresholds { .. }
                | CslError::SignParse { .. }
                | CslError::BlockMismatch { .. }
                | CslError::Geometry(_)
        )
    )
}

fn main() -> ExitCode {
    // try_parse so clap's own usage exit code (2) cannot be mistaken for an
    // indeterminate outcome.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::DetectorParams(a) => detector_params(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Ensemble(a) => ensemble_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::SingleParticle(a) => single_particle(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage_error(&err) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            })
        }
    }
}
