//! End-to-end tests of the `ampse` binary: exit codes, output schemas, and
//! byte determinism of the emitted artifacts.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ampse"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ampse_cli_{tag}"));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary should spawn");
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn single_run_writes_contracted_files_and_exits_zero() {
    let dir = tmp_dir("single");
    let dir_s = dir.to_str().unwrap();
    run_ok(&[
        "single",
        "--n",
        "400",
        "--gamma",
        "0.5",
        "--se-overlay",
        "--out-dir",
        dir_s,
    ]);

    let trace = fs::read_to_string(dir.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,E,Vbar,D,max_change\n"));
    assert!(trace.lines().count() > 2);

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    for key in [
        "schema_version",
        "experiment",
        "params",
        "n",
        "m",
        "gamma",
        "seed",
        "solver",
        "schedule",
        "status",
        "iterations",
        "final_e",
        "final_v_bar",
        "final_d",
        "success",
    ] {
        assert!(sidecar.get(key).is_some(), "run.json missing key {key}");
    }
    assert_eq!(sidecar["schema_version"], 1);
    assert_eq!(sidecar["status"], "converged");

    let se = fs::read_to_string(dir.join("se_trace.csv")).unwrap();
    assert!(se.starts_with("iter,E,V,D\n"));
}

#[test]
fn repeated_invocations_are_byte_identical() {
    let dir_a = tmp_dir("det_a");
    let dir_b = tmp_dir("det_b");
    for dir in [&dir_a, &dir_b] {
        run_ok(&[
            "single",
            "--n",
            "300",
            "--gamma",
            "1.0",
            "--seed",
            "7",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
    }
    for file in ["trace.csv", "run.json"] {
        assert_eq!(
            fs::read(dir_a.join(file)).unwrap(),
            fs::read(dir_b.join(file)).unwrap(),
            "{file} differs between identical invocations"
        );
    }
}

#[test]
fn success_sweep_reports_failures_without_failing() {
    // gamma far above the full-instability threshold: every trial fails,
    // the experiment itself still completes with exit code 0.
    let dir = tmp_dir("sweep");
    run_ok(&[
        "success-sweep",
        "--n",
        "200",
        "--gamma-grid",
        "5.0",
        "--trials",
        "3",
        "--workers",
        "2",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(dir.join("success_sweep.csv")).unwrap();
    assert!(csv.starts_with("n,gamma,trials,successes,fraction,stderr\n"));
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("200,5,3,0,0,"), "unexpected row: {row}");
}

#[test]
fn schedule_compare_emits_all_arms() {
    let dir = tmp_dir("sched");
    run_ok(&[
        "schedule-compare",
        "--n",
        "200",
        "--gamma-grid",
        "0",
        "--max-iter",
        "300",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(dir.join("schedule_compare.csv")).unwrap();
    assert!(csv.starts_with("gamma,scheme,status,sweeps,final_mse\n"));
    for scheme in ["amp", "amp_damped", "rbp_sequential"] {
        assert!(csv.contains(scheme), "missing arm {scheme} in:\n{csv}");
    }
}

#[test]
fn eigen_profile_runs_with_env_worker_override() {
    let dir = tmp_dir("eigen");
    let out = bin()
        .args([
            "eigen-profile",
            "--gamma-grid",
            "1.9",
            "--out-dir",
            dir.to_str().unwrap(),
        ])
        .env("AMPSE_WORKERS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.join("eigen_profile.csv")).unwrap();
    assert!(csv.starts_with("gamma,v,lambda_d,lambda_k\n"));
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("eigen_profile.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["profiles"][0]["regime"], "stable");
}

#[test]
fn config_file_is_honored_and_flags_win() {
    let dir = tmp_dir("config");
    let config_path = dir.join("cfg.json");
    fs::write(
        &config_path,
        format!(
            r#"{{"experiment":"single","n":250,"gamma":0.0,"base_seed":3,"out_dir":"{}"}}"#,
            dir.display()
        ),
    )
    .unwrap();
    // Flag overrides the config's gamma.
    run_ok(&[
        "single",
        "--config",
        config_path.to_str().unwrap(),
        "--gamma",
        "0.25",
    ]);
    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(sidecar["gamma"], 0.25);
    assert_eq!(sidecar["n"], 250);
}

#[test]
fn bad_inputs_exit_nonzero() {
    // Unknown schedule value.
    let out = bin()
        .args(["single", "--n", "100", "--schedule", "bogus"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Config file with an unknown field.
    let dir = tmp_dir("badcfg");
    let path = dir.join("bad.json");
    fs::write(&path, r#"{"experiment":"single","not_a_field":1}"#).unwrap();
    let out = bin()
        .args(["single", "--config", path.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Invalid damping (configuration error caught by validation).
    let out = bin()
        .args(["single", "--n", "100", "--damping", "1.5"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    // Degenerate quadrature resolution.
    let out = bin()
        .args(["eigen-profile", "--quad-nodes", "5"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
