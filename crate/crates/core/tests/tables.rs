use std::path::PathBuf;

use csl_core::collapse::{run_detection, DetectionOptions, OutcomeClass, Policy};
use csl_core::config::RunConfig;
use csl_core::detector::AvalancheSchedule;
use csl_core::ensemble::run_ensemble;
use csl_core::noise::{NoiseConfig, NoiseStream, SignSequence};

const STEPS: [u32; 12] = [26, 23, 22, 20, 18, 17, 15, 14, 13, 12, 11, 10];

fn profiles() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../profiles")
}

fn load(name: &str) -> SignSequence {
    let text = std::fs::read_to_string(profiles().join("signs").join(name)).unwrap();
    SignSequence::parse(&text).unwrap()
}

fn replay(seq: &SignSequence, policy: Policy) -> csl_core::collapse::TrajectoryRecord {
    let sched = AvalancheSchedule::from_steps(10, STEPS.to_vec(), 5e-13).unwrap();
    let mut noise = NoiseStream::from_signs(NoiseConfig::default(), seq).unwrap();
    let opts = DetectionOptions {
        policy,
        ..DetectionOptions::default()
    };
    run_detection(&sched, &mut noise, 0.4, &opts).unwrap()
}

#[test]
fn click_table() {
    let rec = replay(&load("table_i.signs"), Policy::Strict);
    assert_eq!(rec.outcome.class, OutcomeClass::Click);
    assert!(rec.outcome.final_a1sq >= 0.99);
    assert!((rec.outcome.final_n_expect / 40960.0 - 1.0).abs() < 0.01);
    assert!(rec.rows.iter().all(|r| r.valid));
    let sums: Vec<i64> = rec.generations.iter().map(|g| g.sign_sum).collect();
    assert_eq!(sums, [-4, 1, 0, 2, 0, -1, 3, -2, -1, 2, 3, 0]);
}

#[test]
fn silent_table() {
    let rec = replay(&load("table_ii.signs"), Policy::Strict);
    assert_eq!(rec.outcome.class, OutcomeClass::Silent);
    assert!(rec.outcome.final_a1sq <= 1e-4);
    assert!(rec.outcome.final_n_expect <= 1.0);
    assert!(rec.rows.iter().all(|r| r.valid));
}

#[test]
fn reordered_table() {
    let one = load("table_i.signs");
    let three = load("table_iii.signs");
    assert_eq!(one.block_sums(), three.block_sums());
    assert_eq!(three.blocks()[10], [-1, 1, 1, -1, -1, 1, 1, -1, 1, 1, 1]);
    let rec = replay(&three, Policy::Strict);
    assert_eq!(rec.outcome.class, OutcomeClass::Indeterminate);
    assert!(rec.outcome.final_a1sq > 1e-4 && rec.outcome.final_a1sq < 0.99);
    // Generations 1..10 are shared with the click table.
    let click = replay(&one, Policy::Strict);
    assert_eq!(rec.generations[..10], click.generations[..10]);
}

#[test]
fn guarded_agrees_when_nothing_is_violated() {
    for name in ["table_i.signs", "table_ii.signs", "table_iii.signs"] {
        let seq = load(name);
        let strict = replay(&seq, Policy::Strict);
        let guarded = replay(&seq, Policy::Guarded);
        assert_eq!(strict.outcome, guarded.outcome, "{name}");
        assert_eq!(guarded.outcome.redraws, 0);
    }
}

#[test]
fn shipped_files_are_canonical() {
    for name in ["table_i.signs", "table_ii.signs", "table_iii.signs"] {
        let seq = load(name);
        let again = SignSequence::parse(&seq.emit()).unwrap();
        assert_eq!(again, seq);
        assert_eq!(seq.block_lengths(), STEPS);
    }
}

#[test]
fn profiles_load_and_replay() {
    for (file, class) in [
        ("table_i.toml", OutcomeClass::Click),
        ("table_ii.toml", OutcomeClass::Silent),
        ("table_iii.toml", OutcomeClass::Indeterminate),
    ] {
        let cfg = RunConfig::load(&profiles().join(file)).unwrap();
        let signs = cfg.load_signs().unwrap();
        let report = run_ensemble(&cfg.ensemble_config(signs)).unwrap();
        assert_eq!(report.counts.get(class), 1, "{file}");
        assert_eq!(report.completed, 1);
    }
    let reference = RunConfig::load(&profiles().join("reference.toml")).unwrap();
    assert_eq!(reference.build_schedule().unwrap().generations(), 12);
}
