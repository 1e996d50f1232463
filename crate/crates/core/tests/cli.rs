use std::path::Path;
use std::process::{Command, Output};

use pell_lab::cli::{RunReport, Status};
use serde_json::json;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pell-lab"));
    c.env_remove("PELL_LAB_THREADS");
    c
}

fn heat(n: usize, v: f64) -> serde_json::Value {
    json!({
        "dim": 1,
        "extents": [[0.0, std::f64::consts::PI]],
        "n_cells": [n],
        "bc": "dirichlet",
        "A": [[[1.0, 0.0]]],
        "b": [[0.0, 0.0]],
        "c": [[0.0, 0.0]],
        "V": v
    })
}

fn class_check(name: &str, expect: bool) -> serde_json::Value {
    json!({
        "name": name,
        "kind": "class_check",
        "inputs": { "coefficients": heat(16, 0.0) },
        "params": { "p": 3.0, "classes": ["S_p"], "expect": expect },
        "seed": 1
    })
}

fn small_suite() -> serde_json::Value {
    json!({ "scenarios": [
        {
            "name": "convexity",
            "kind": "convexity",
            "inputs": { "coefficients": heat(4, 0.0), "second": heat(4, 1.0) },
            "params": { "p": 3.0, "n_samples": 2000 },
            "seed": 5
        },
        {
            "name": "flow",
            "kind": "flow",
            "inputs": { "coefficients": heat(64, 0.0), "second": heat(64, 0.0) },
            "params": {
                "p": 2.0,
                "f": { "type": "eigenmode", "j": 1 },
                "g": { "type": "bump", "center": [1.0], "width": 0.3 },
                "t_grid": [0.0, 0.1, 0.2, 0.4],
                "delta": 0.25
            },
            "seed": 6
        },
        class_check("class", true)
    ]})
}

fn write(dir: &Path, name: &str, v: &serde_json::Value) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn empty_config_exits_zero_with_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.json", &json!({ "scenarios": [] }));
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep.scenarios.is_empty());
    assert_eq!(rep.n_pass + rep.n_fail + rep.n_not_refuted, 0);
}

#[test]
fn empty_report_writes_no_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "empty.json", &json!({ "scenarios": [] }));
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(files.iter().all(|f| f == "report.json"), "{files:?}");
}

#[test]
fn malformed_json_exits_two_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"scenarios\": [\n    {\"name\": \"x\",,}\n  ]\n}\n").unwrap();
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn unknown_flag_and_missing_config_exit_two() {
    assert_eq!(code(&run(&["run", "--nope"])), 2);
    assert_eq!(code(&run(&["run", "--config", "/definitely/not/here.json"])), 2);
}

#[test]
fn missing_coefficient_file_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = class_check("c", true);
    s["inputs"]["coefficients"] = json!("nowhere.json");
    let cfg = write(dir.path(), "c.json", &json!({ "scenarios": [s] }));
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn failing_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "f.json", &json!({ "scenarios": [class_check("ok", true), class_check("wrong", false)] }));
    let out = run(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let rep: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep.n_pass, 1);
    assert_eq!(rep.n_fail, 1);
    let wrong = rep.scenarios.iter().find(|s| s.name == "wrong").unwrap();
    assert_eq!(wrong.status, Status::Fail);
}

#[test]
fn relative_paths_resolve_against_the_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "heat.json", &heat(16, 0.0));
    let mut s = class_check("c", true);
    s["inputs"]["coefficients"] = json!("heat.json");
    let cfg = write(dir.path(), "c.json", &json!({ "scenarios": [s] }));
    assert_eq!(code(&run(&["run", "--config", cfg.to_str().unwrap()])), 0);
}

#[test]
fn reports_are_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "suite.json", &small_suite());
    let mut reports = vec![];
    for (k, threads) in ["1", "2", "1"].iter().enumerate() {
        let out_dir = dir.path().join(format!("out{k}"));
        let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--threads", threads]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(std::fs::read(out_dir.join("report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(reports[0], reports[2]);
}

#[test]
fn seed_override_changes_recorded_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &json!({ "scenarios": [class_check("c", true)] }));
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--seed-override", "99"]);
    let rep: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep.scenarios[0].seed, 99);
}

#[test]
fn report_round_trips_and_lists_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "suite.json", &small_suite());
    let out_dir = dir.path().join("out");
    let out = run(&["run", "--config", cfg.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let rep: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(rep.to_json(), text);
    assert_eq!(rep.scenarios.len(), 3);
    for s in &rep.scenarios {
        for a in &s.artifacts {
            assert!(out_dir.join(a).exists() || Path::new(a).exists(), "{a}");
        }
    }
    let flow = rep.scenarios.iter().find(|s| s.name == "flow").unwrap();
    let csv_name = flow.artifacts.iter().find(|a| a.ends_with(".csv")).expect("flow table");
    let path = if Path::new(csv_name).exists() { Path::new(csv_name).to_path_buf() } else { out_dir.join(csv_name) };
    let csv = std::fs::read_to_string(path).unwrap();
    let e: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(csv.lines().next().unwrap(), "t,E,norm_f,norm_g");
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9)), "{e:?}");
}

#[test]
fn threads_env_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", &json!({ "scenarios": [class_check("c", true)] }));
    let ok = bin().args(["run", "--config", cfg.to_str().unwrap()]).env("PELL_LAB_THREADS", "2").output().unwrap();
    assert_eq!(code(&ok), 0);
    let bad = bin().args(["run", "--config", cfg.to_str().unwrap()]).env("PELL_LAB_THREADS", "many").output().unwrap();
    assert_eq!(code(&bad), 2);
    // the flag wins over the variable
    let flag = bin().args(["run", "--config", cfg.to_str().unwrap(), "--threads", "1"]).env("PELL_LAB_THREADS", "many").output().unwrap();
    assert_eq!(code(&flag), 0);
}

#[test]
fn regions_command_writes_all_five_regions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("regions.csv");
    let o = run(&["regions", "--p", "3", "--kappa", "0.15", "--out", out.to_str().unwrap(), "--resolution", "120"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let labels: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap()).collect();
    for want in ["I", "R_zeta", "R_eta", "T", "O"] {
        assert!(labels.contains(want), "{want} missing from {labels:?}");
    }
    assert_eq!(csv.lines().count(), 1 + 120 * 120);
}

#[test]
fn regions_rejects_bad_kappa() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    assert_eq!(code(&run(&["regions", "--p", "3", "--kappa", "5", "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn bundled_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["paper-suite.json", "quick.json"] {
        let cfg = pell_lab::cli::load_config(&root.join(name)).unwrap();
        assert!(!cfg.scenarios.is_empty());
    }
}
