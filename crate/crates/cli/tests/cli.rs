use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_csl-sim"));
    cmd.env_remove("CSL_SIM_CONFIG");
    cmd
}

fn profile(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../profiles")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes_follow_outcome() {
    for (file, expected, class) in [
        ("table_i.toml", 0, "click"),
        ("table_ii.toml", 1, "silent"),
        ("table_iii.toml", 2, "indeterminate"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let cfg = profile(file);
        let out = run(&[
            "simulate",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(
            code(&out),
            expected,
            "{file}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let outcome = read_json(&dir.path().join("outcome.json"));
        assert_eq!(outcome["outcome"], class);
        assert!(outcome["violated_at"].is_null());
        let traj = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(
            traj.lines().next(),
            Some("step,time_s,k,Y,dB,a1sq,N_expect,valid")
        );
        assert_eq!(traj.lines().count(), 202);
    }
}

#[test]
fn validity_stop_is_three() {
    let dir = tempfile::tempdir().unwrap();
    let signs = dir.path().join("one.signs");
    std::fs::write(&signs, "blocks: 1\n-\n").unwrap();
    let out = run(&[
        "simulate",
        "--steps",
        "1",
        "--n0",
        "40960",
        "--a1sq0",
        "0.3",
        "--signs",
        signs.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    // One generation with n0 = 40960 gives Y = 81920, still past the bound.
    assert_eq!(code(&out), 3);
    let outcome = read_json(&dir.path().join("outcome.json"));
    assert_eq!(outcome["outcome"], "validity_stop");
    assert_eq!(outcome["violated_at"]["step"], 1);
}

#[test]
fn errors_exit_above_three() {
    assert_eq!(code(&run(&["simulate", "--nonsense"])), 4);
    assert_eq!(code(&run(&["simulate", "--a1sq0", "1.5"])), 4);
    assert_eq!(
        code(&run(&["simulate", "--config", "/no/such/file.toml"])),
        4
    );
    let dir = tempfile::tempdir().unwrap();
    let signs = dir.path().join("short.signs");
    std::fs::write(&signs, "blocks: 2\n+ -\n").unwrap();
    let out = run(&["simulate", "--signs", signs.to_str().unwrap()]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("block"));
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn config_from_environment() {
    let out = bin()
        .args(["simulate", "--no-trajectory"])
        .env("CSL_SIM_CONFIG", profile("table_ii.toml"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn flags_override_config() {
    // Same signs, but a1sq0 = 0 is absorbing, so the click table goes silent.
    let out = run(&[
        "simulate",
        "--config",
        profile("table_i.toml").to_str().unwrap(),
        "--a1sq0",
        "0",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn ensemble_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = run(&[
            "ensemble",
            "--trials",
            "300",
            "--seed",
            "17",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    let report = read_json(&a.path().join("report.json"));
    let counts = &report["counts"];
    let total: u64 = ["click", "silent", "indeterminate", "validity_stop"]
        .iter()
        .map(|k| counts[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 300);
    let ma = read_json(&a.path().join("manifest.json"));
    let mb = read_json(&b.path().join("manifest.json"));
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(ma["seed"], 17);
    assert_eq!(ma["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn sweep_writes_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--axis",
        "a1sq0",
        "--values",
        "0,0.5,1",
        "--trials",
        "20",
        "--steps",
        "26,23,22",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("a1sq0,0,20,20,0,20,"));
    assert!(csv
        .lines()
        .nth(3)
        .unwrap()
        .starts_with("a1sq0,1,20,20,20,0,"));
}

#[test]
fn detector_params_json() {
    let out = run(&["detector-params", "--json"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["generations"], 12);
    assert_eq!(v["multiplication_factor"], 4096);
    let out = run(&["detector-params", "--json", "--formula-drop"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["generations"], 13);
}

#[test]
fn single_particle_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "single-particle",
        "--length",
        "50",
        "--target=-13",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("325000 steps"));
    let csv = std::fs::read_to_string(dir.path().join("single.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("step,time_s,dB,p0,p1"));
    assert_eq!(csv.lines().count(), 52);
    let decay = read_json(&dir.path().join("decay.json"));
    assert_eq!(decay["steps"], 325000);
}
