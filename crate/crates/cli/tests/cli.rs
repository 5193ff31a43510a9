use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const DOUBLE_WELL: &str = r#"
[problem]
drift = { name = "double-well" }
sigma = [1.0]
epsilon = 1e-3
horizon = 1.0
steps = 100
initial = { kind = "dirac", mean = [0.5] }

[estimator]
space = { kind = "gauss-hermite", order = 20 }
reference_steps = 1000
reference_output_every = 1
"#;

const LINEAR_2D: &str = r#"
command = "kl-continuous"
seed = 3

[problem]
drift = { name = "linear", params = [2, -0.5, 1.0, -1.0, -0.2, 0.1, 0.0] }
sigma = [1.0, 0.3, 0.3, 0.5]
epsilon = 0.01
horizon = 1.0
steps = 50
initial = { kind = "dirac", mean = [1.0, -1.0] }
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn smallnoise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smallnoise"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 1, "one summary line expected: {text}");
    serde_json::from_str(text.trim()).unwrap()
}

fn run_in(dir: &TempDir, config: &Path, extra: &[&str]) -> Output {
    let out = dir.path().join("out");
    let mut args = vec![
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    smallnoise(&args)
}

#[test]
fn linear_kl_is_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR_2D);
    let out = run_in(&dir, &cfg, &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&out);
    assert_eq!(s["kl_total"], 0.0);
    assert_eq!(s["method"], "exact-zero");
    assert_eq!(s["seed"], 3);
    let record: Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/kl.json")).unwrap()).unwrap();
    for key in [
        "value",
        "initial_term",
        "residual_term",
        "stderr",
        "method",
        "n_samples",
        "seed",
    ] {
        assert!(record.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn kl_discrete_reports_upto() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let out = run_in(&dir, &cfg, &["kl-discrete", "--set", "estimator.upto=40"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&out);
    assert_eq!(s["upto"], 40);
    assert!(s["kl_total"].as_f64().unwrap() > 0.0);
}

#[test]
fn negative_epsilon_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR_2D);
    let out = run_in(&dir, &cfg, &["--set", "problem.epsilon=-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("problem.epsilon"));
    assert!(out.stdout.is_empty());
}

#[test]
fn unknown_keys_and_commands_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), LINEAR_2D);
    assert_eq!(
        run_in(&dir, &cfg, &["--set", "problem.temperature=1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run_in(&dir, &cfg, &["frobnicate"]).status.code(), Some(2));
    let no_command = write_config(dir.path(), DOUBLE_WELL);
    assert_eq!(run_in(&dir, &no_command, &[]).status.code(), Some(2));
}

#[test]
fn blow_up_is_a_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let out = run_in(
        &dir,
        &cfg,
        &[
            "simulate",
            "--set",
            "problem.drift.name=cubic",
            "--set",
            "problem.initial.mean=[10.0]",
            "--set",
            "problem.horizon=10",
            "--set",
            "problem.steps=10",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blew up"));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let out = run_in(&dir, &cfg, &["moments", "--dry-run"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(summary(&out)["dry_run"], true);
    assert!(!dir.path().join("out").exists());
}

#[test]
fn shipped_config_validates_for_every_command() {
    let cfg = concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/../../configs/double_well.toml"
    );
    for command in [
        "simulate",
        "moments",
        "kl-continuous",
        "kl-discrete",
        "sweep-eps",
        "sweep-dt",
        "wrong-mean-tv",
        "rate",
    ] {
        let out = smallnoise(&[command, "--config", cfg, "--dry-run"]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{command}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn outputs_are_byte_identical_across_runs_and_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let sweep = [
        "sweep-eps",
        "--set",
        "sweep.values=[1e-1, 1e-2, 1e-3, 1e-4]",
        "--set",
        "estimator.space={ kind = \"monte-carlo\", samples = 2000 }",
        "--set",
        "sweep.tv_paths=10000",
    ];
    let mut runs = Vec::new();
    for threads in ["1", "4"] {
        let out_dir = dir.path().join(format!("out{threads}"));
        let mut args = vec![
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--threads",
            threads,
        ];
        args.extend_from_slice(&sweep);
        let out = smallnoise(&args);
        assert_eq!(
            out.status.code().map(|c| c == 0 || c == 4),
            Some(true),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        runs.push(out_dir);
    }
    for name in [
        "sweep_eps_continuous.csv",
        "sweep_eps_discrete.csv",
        "sweep_eps.json",
    ] {
        let a = fs::read(runs[0].join(name)).unwrap();
        let b = fs::read(runs[1].join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let csv = fs::read_to_string(runs[0].join("sweep_eps_continuous.csv")).unwrap();
    assert!(csv.starts_with("sweep_value,kl_total,kl_initial,kl_residual,stderr,tv,tv_err\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn sweep_eps_check_passes_on_double_well() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let out = run_in(
        &dir,
        &cfg,
        &[
            "sweep-eps",
            "--check",
            "--set",
            "sweep.values=[1e-2, 3e-3, 1e-3, 3e-4, 1e-4]",
            "--set",
            "sweep.dt_sim=1e-3",
            "--set",
            "sweep.tv_paths=20000",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(&out);
    assert_eq!(s["passed"], true);
    let slope = s["continuous"]["fit"]["slope"].as_f64().unwrap();
    assert!((0.85..=1.15).contains(&slope), "{slope}");
}

#[test]
fn failed_check_exits_with_four() {
    // Stopping the wrong-mean sweep at ε = 0.1 leaves TV well below 0.99.
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let args = [
        "wrong-mean-tv",
        "--set",
        "sweep.values=[4.0, 2.0, 1.0, 0.1]",
        "--set",
        "sweep.tv_paths=10000",
    ];
    let plain = run_in(&dir, &cfg, &args);
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(summary(&plain)["check"], false);
    let mut checked = args.to_vec();
    checked.push("--check");
    assert_eq!(run_in(&dir, &cfg, &checked).status.code(), Some(4));
}

#[test]
fn simulate_dump_and_rate_paths() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), DOUBLE_WELL);
    let out = run_in(
        &dir,
        &cfg,
        &[
            "simulate",
            "--set",
            "simulate.paths=3",
            "--set",
            "simulate.dump=true",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/ensemble.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 101);

    let out = run_in(
        &dir,
        &cfg,
        &[
            "rate",
            "--set",
            "rate.path=\"constant\"",
            "--set",
            "problem.steps=10",
        ],
    );
    let rate = summary(&out)["rate"].as_f64().unwrap();
    assert!((rate - 0.5 * 0.375f64.powi(2)).abs() < 1e-12);
}
