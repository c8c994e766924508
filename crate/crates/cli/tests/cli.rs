//! End-to-end checks of the binary: exit codes, diagnostics, artifact
//! layout, and rerun determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_stabledom");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .output()
        .expect("binary launches")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.txt");
    fs::write(&path, body).expect("config written");
    path.to_string_lossy().into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn malformed_config_exits_2_with_a_line_anchored_diagnostic() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpa = 1.0\nalpha = 1.0\neps = 0.5\n",
    );
    let out = run(&["check-assumptions", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "stderr: {stderr}");
    assert!(stderr.contains("alpa"), "stderr: {stderr}");
}

#[test]
fn negative_time_exits_2_and_names_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpha = 1.0\neps = 0.5\n\n\
         [grid]\nhalf_width = 12.0\nspacing = 0.125\n\n[run]\nt = -0.5\n",
    );
    let out = run(&["density", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`t`"), "stderr: {stderr}");
}

#[test]
fn unknown_command_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpha = 1.0\neps = 0.5\n",
    );
    let out = run(&["plot", "--config", &config]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown command"), "stderr: {stderr}");
}

#[test]
fn assumption_checks_pass_for_a_tempered_kernel() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = exp-power\nm = 1.0\nbeta = 1.0\ngamma = 0.0\n\
         alpha = 0.5\ndim = 1\neps = 0.5\n",
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "check-assumptions",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&read(&out_dir, "report.json")).unwrap();
    assert_eq!(report["verdict"], "Pass");
    let conditions = report["conditions"].as_array().unwrap();
    assert_eq!(conditions.len(), 6);
    assert!(conditions.iter().all(|c| c["verdict"] == "Pass"));

    let constants = read(&out_dir, "constants.csv");
    assert!(constants.starts_with("name,value,provenance\n"));

    let manifest: serde_json::Value =
        serde_json::from_str(&read(&out_dir, "manifest.json")).unwrap();
    assert_eq!(manifest["command"], "check-assumptions");
    assert!(manifest["config_fingerprint"].as_str().unwrap().len() == 16);
}

#[test]
fn sweep_marks_failing_cells_and_still_exits_0() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpha = 0.5\neps = 0.5\n\n\
         [sweep]\nbetas = 0.5, 2.0\ngammas = 0.0\nalpha = 0.5\ndim = 1\n\n\
         [run]\nlags = 4, 6, 8, 10\n",
    );
    let out_dir = tmp.path().join("out");
    let out = run(&[
        "sweep-s3",
        "--config",
        &config,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = read(&out_dir, "sweep.csv");
    assert!(csv.starts_with("m,beta,gamma,alpha,dim,predicted,observed"));
    assert!(csv.contains("holds,holds"), "csv: {csv}");
    assert!(csv.contains("fails,fails"), "csv: {csv}");
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpha = 1.0\neps = 0.5\n\n\
         [run]\nt = 0.5\nn_paths = 2000\nseed = 99\n",
    );
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&["simulate", "--config", &config, "--out", dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }

    assert_eq!(read(&dir_a, "report.json"), read(&dir_b, "report.json"));
    assert_eq!(read(&dir_a, "histogram.csv"), read(&dir_b, "histogram.csv"));

    // Manifests may differ only in the timestamp field.
    let mut ma: serde_json::Value =
        serde_json::from_str(&read(&dir_a, "manifest.json")).unwrap();
    let mut mb: serde_json::Value =
        serde_json::from_str(&read(&dir_b, "manifest.json")).unwrap();
    ma["unix_time_secs"] = serde_json::Value::Null;
    mb["unix_time_secs"] = serde_json::Value::Null;
    assert_eq!(ma, mb);
}

#[test]
fn seed_override_changes_the_sampled_histogram() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[kernel]\nprofile = constant-one\nalpha = 1.0\neps = 0.5\n\n\
         [run]\nt = 0.5\nn_paths = 2000\nseed = 99\n",
    );
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    let out_a = run(&["simulate", "--config", &config, "--out", dir_a.to_str().unwrap()]);
    let out_b = run(&[
        "simulate",
        "--config",
        &config,
        "--out",
        dir_b.to_str().unwrap(),
        "--seed",
        "100",
    ]);
    assert_eq!(out_a.status.code(), Some(0));
    assert_eq!(out_b.status.code(), Some(0));

    assert_ne!(read(&dir_a, "histogram.csv"), read(&dir_b, "histogram.csv"));

    let mb: serde_json::Value =
        serde_json::from_str(&read(&dir_b, "manifest.json")).unwrap();
    assert_eq!(mb["seed"], 100);
}
