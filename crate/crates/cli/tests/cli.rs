//! End-to-end tests of the `fedcure` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fedcure"))
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fedcure-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small, fast experiment shared by most tests.
fn tiny_args() -> Vec<&'static str> {
    vec![
        "--n-clients",
        "8",
        "--n-edges",
        "2",
        "--n-classes",
        "4",
        "--tau-c",
        "2",
        "--tau-e",
        "2",
        "--rounds",
        "10",
        "--learner",
        "false",
    ]
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn run_writes_expected_artifacts() {
    let dir = fresh_dir("run");
    let mut args = vec!["run", "--seed", "3", "--out", dir.to_str().unwrap()];
    args.extend(tiny_args());
    run_ok(&args);

    let rounds = String::from_utf8(read(&dir, "rounds.csv")).unwrap();
    // Header plus τ_g + 1 rows.
    assert_eq!(rounds.lines().count(), 1 + 10 + 1);
    assert!(dir.join("formation.csv").exists());
    let summary = String::from_utf8(read(&dir, "summary.json")).unwrap();
    assert!(summary.contains("\"scheduler\": \"fedcure\""));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn same_seed_is_byte_identical() {
    let a = fresh_dir("det-a");
    let b = fresh_dir("det-b");
    for dir in [&a, &b] {
        let mut args = vec!["run", "--seed", "7", "--out", dir.to_str().unwrap()];
        args.extend(tiny_args());
        run_ok(&args);
    }
    for name in [
        "rounds.csv",
        "formation.csv",
        "allocations.csv",
        "summary.json",
    ] {
        assert_eq!(read(&a, name), read(&b, name), "{name} differs across runs");
    }
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn scheduler_choice_leaves_formation_untouched() {
    let a = fresh_dir("sched-a");
    let b = fresh_dir("sched-b");
    for (dir, kind) in [(&a, "fedcure"), (&b, "greedy")] {
        let mut args = vec![
            "run",
            "--seed",
            "7",
            "--scheduler",
            kind,
            "--rounds",
            "40",
            "--out",
            dir.to_str().unwrap(),
        ];
        args.extend(
            tiny_args()
                .into_iter()
                .filter(|a| *a != "--rounds" && *a != "10"),
        );
        run_ok(&args);
    }
    assert_eq!(read(&a, "formation.csv"), read(&b, "formation.csv"));
    assert_ne!(read(&a, "rounds.csv"), read(&b, "rounds.csv"));
    fs::remove_dir_all(&a).unwrap();
    fs::remove_dir_all(&b).unwrap();
}

#[test]
fn skip_formation_omits_the_trace() {
    let dir = fresh_dir("skip");
    let mut args = vec!["run", "--skip-formation", "--out", dir.to_str().unwrap()];
    args.extend(tiny_args());
    run_ok(&args);
    assert!(!dir.join("formation.csv").exists());
    assert!(dir.join("rounds.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn validate_accepts_good_and_rejects_bad() {
    let out = bin().args(["validate"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));

    let out = bin().args(["validate", "--ell", "1.5"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ell"));
}

#[test]
fn config_file_plus_overrides() {
    let dir = fresh_dir("config");
    let config_path = dir.join("exp.toml");
    fs::write(
        &config_path,
        "n_clients = 8\nn_edges = 2\nn_classes = 4\ntau_g = 6\nbeta = 2.0\n\n[learner]\nenabled = false\n",
    )
    .unwrap();
    let out_dir = dir.join("out");
    run_ok(&[
        "run",
        "--config",
        config_path.to_str().unwrap(),
        "--beta",
        "4.0",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    let summary = String::from_utf8(read(&out_dir, "summary.json")).unwrap();
    assert!(
        summary.contains("\"beta\": 4.0"),
        "override lost:\n{summary}"
    );
    assert!(summary.contains("\"rounds\": 6"));

    // Unknown keys are a config error, not silently ignored.
    fs::write(&config_path, "not_a_field = 1\n").unwrap();
    let out = bin()
        .args(["validate", "--config", config_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn sweep_writes_per_value_artifacts() {
    let dir = fresh_dir("sweep");
    let mut args = vec![
        "sweep",
        "--param",
        "beta",
        "--values",
        "0.5,5",
        "--skip-formation",
        "--seed",
        "9",
        "--out",
        dir.to_str().unwrap(),
    ];
    args.extend(tiny_args());
    let out = run_ok(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("max_queue"));
    for sub in ["beta=0.5", "beta=5"] {
        assert!(dir.join(sub).join("rounds.csv").exists(), "missing {sub}");
        assert!(dir.join(sub).join("summary.json").exists());
    }

    // Unknown parameter fails; an empty value list is a no-op success.
    let out = bin()
        .args(["sweep", "--param", "nope", "--values", "1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin().args(["sweep", "--param", "beta"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("nothing to run"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn form_reports_the_game_outcome() {
    let dir = fresh_dir("form");
    let mut args = vec!["form", "--seed", "4", "--out", dir.to_str().unwrap()];
    args.extend(tiny_args());
    let out = run_ok(&args);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("formation: avg-JS"));
    assert!(stdout.contains("converged"));
    assert!(dir.join("formation.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn env_var_sets_default_out_dir() {
    let dir = fresh_dir("envvar");
    let mut args = vec!["run", "--seed", "5"];
    args.extend(tiny_args());
    let out = bin()
        .args(&args)
        .env("FEDCURE_OUT_DIR", &dir)
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("rounds.csv").exists());
    fs::remove_dir_all(&dir).unwrap();
}
