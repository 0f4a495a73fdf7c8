use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cccb_cli::{parse_config, Experiment};
use tempfile::TempDir;

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn run(config: &str, dir: &TempDir, extra: &[&str]) -> Output {
    let path = dir.path().join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_cccb"))
        .arg("run")
        .arg("--config")
        .arg(&path)
        .arg("--output")
        .arg(dir.path().join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn read(dir: &TempDir, file: &str) -> String {
    fs::read_to_string(dir.path().join("out").join(file)).unwrap()
}

#[test]
fn paper_preset_matches_the_simulation_setup() {
    let c = parse_config(&presets().join("paper_s6.json")).unwrap();
    assert_eq!((c.num_arms, c.d, c.max_arms, c.alpha), (100, 10, 2, 0.2));
    assert_eq!(c.noise, cccb::NoiseModel::Gaussian { sigma: 1.0 });
    assert_eq!(c.horizon, 50_000);
}

#[test]
fn desk_preset_is_the_default() {
    let c = parse_config(&presets().join("desk.json")).unwrap();
    assert_eq!(c.experiment, Experiment::RegretCurves);
    assert_eq!((c.num_arms, c.d, c.max_arms, c.horizon, c.n_seeds), (20, 5, 2, 2000, 50));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let out = run(r#"{"alpha": 1.5}"#, &dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("`alpha`") && stderr.contains("(0, 1)"), "{stderr}");

    let out = run(r#"{"alpah": 0.2}"#, &dir, &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));

    let out = run("not json", &dir, &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_cccb"))
        .args(["run", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn regret_curves_writes_logs_aggregates_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = run(r#"{"T": 120, "n_seeds": 3}"#, &dir, &["--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = read(&dir, "regret_curves.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,mean_avg_regret,std_avg_regret,policy"));
    assert_eq!(lines.count(), 3 * 120);
    assert!(csv.contains(",c2ucb\n") && csv.contains("ccconucb_unknown(alpha=0.2)"));

    let log = read(&dir, "logs/ccconucb_known/seed_1.ndjson");
    assert_eq!(log.lines().count(), 121);
    assert!(log.starts_with(r#"{"type":"meta""#));

    let manifest: serde_json::Value = serde_json::from_str(&read(&dir, "manifest.json")).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1, 2]));
    assert_eq!(manifest["config"]["T"], 120);
    assert!(manifest["version"].is_string());

    let probes: serde_json::Value = serde_json::from_str(&read(&dir, "probes.json")).unwrap();
    assert_eq!(probes["all_pass"], true);
    assert_eq!(probes["episodes"], 9);
}

#[test]
fn reruns_are_identical_except_the_manifest_timestamp() {
    let config = r#"{"T": 80, "n_seeds": 2, "base_seed": 5}"#;
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    assert_eq!(run(config, &a, &["--workers", "1"]).status.code(), Some(0));
    assert_eq!(run(config, &b, &["--workers", "3"]).status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_str(&read(&a, "manifest.json")).unwrap();
    for file in manifest["files"].as_array().unwrap() {
        let file = file.as_str().unwrap();
        if file == "manifest.json" {
            continue;
        }
        assert_eq!(read(&a, file), read(&b, file), "{file} differs");
    }
}

#[test]
fn seed_offset_shifts_instances() {
    let dir = TempDir::new().unwrap();
    let out = run(r#"{"T": 20, "n_seeds": 2}"#, &dir, &["--seed-offset", "10"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("out/logs/c2ucb/seed_11.ndjson").exists());
}

#[test]
fn table1_has_one_row_per_alpha() {
    let dir = TempDir::new().unwrap();
    let out = run(r#"{"experiment": "table1", "T": 150, "n_seeds": 2}"#, &dir, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir, "table1.csv");
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "alpha,c2ucb_violations,ccconucb_violations,ccconucb_optimistic,ccconucb_conservative,seeds"
    );
    let alphas: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(alphas, ["0.01", "0.15", "0.3", "0.6", "0.9"]);
    for row in &rows[1..] {
        let cols: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(cols[3] + cols[4], 150.0);
    }
}

#[test]
fn endurance_reports_terciles() {
    let dir = TempDir::new().unwrap();
    let out = run(
        r#"{"experiment": "endurance", "T": 100, "n_seeds": 3, "replicates": 2, "write_logs": false}"#,
        &dir,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir, "endurance.csv");
    assert!(csv.starts_with("alpha,gap_tercile,runs,censored,mean_endurance\n"));
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
    assert_eq!(read(&dir, "endurance_samples.csv").lines().count(), 1 + 3 * 3 * 2);
    assert!(!dir.path().join("out/logs").exists());
}

#[test]
fn probes_experiment_passes_and_checks_coverage() {
    let dir = TempDir::new().unwrap();
    let out = run(
        r#"{"experiment": "probes", "T": 150, "n_seeds": 40, "write_logs": false}"#,
        &dir,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let probes: serde_json::Value = serde_json::from_str(&read(&dir, "probes.json")).unwrap();
    let names: Vec<&str> = probes["probes"]["probes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"confidence_coverage"), "{names:?}");
    assert!(names.contains(&"conservative_round_bound"));
}

#[test]
fn too_few_episodes_skip_coverage() {
    let dir = TempDir::new().unwrap();
    let out = run(r#"{"experiment": "probes", "T": 30, "n_seeds": 2}"#, &dir, &[]);
    assert_eq!(out.status.code(), Some(0));
    let probes: serde_json::Value = serde_json::from_str(&read(&dir, "probes.json")).unwrap();
    assert!(probes["skipped"][0].as_str().unwrap().contains("confidence_coverage"));
}

#[test]
fn desk_scale_probes_exit_zero() {
    let dir = TempDir::new().unwrap();
    let out = run(
        r#"{"experiment": "probes", "M": 20, "d": 5, "K": 2, "T": 2000, "n_seeds": 50, "write_logs": false}"#,
        &dir,
        &[],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
