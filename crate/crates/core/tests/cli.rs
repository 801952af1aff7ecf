//! End-to-end tests of the command-line interface and its CSV outputs.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spacing");

fn config(dir: &Path, algorithms: &str, seeds: &str) -> String {
    format!(
        r#"{{
  "market": {{"type": "uniform_grid", "K": 20}},
  "reward": {{"type": "sqrt"}},
  "rho": 0.2,
  "T": 600,
  "algorithms": {algorithms},
  {seeds},
  "output_dir": "{}"
}}"#,
        dir.join("out").display()
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("SPACING_SEED");
    if let Some(s) = env_seed {
        cmd.env("SPACING_SEED", s);
    }
    cmd.output().unwrap()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

const SUMMARY_HEADER: &str =
    "algorithm,seed,T,rho,utility_true,utility_accounted,spend,wins,conversions,opt_per_round,regret";

#[test]
fn simulate_writes_one_row_per_seed_and_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &config(dir.path(), r#"["fkors"]"#, r#""seeds": [3, 4, 5]"#));
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = dir.path().join("out/summary.csv");
    let first = fs::read(&summary).unwrap();
    let rows = lines(&summary);
    assert_eq!(rows[0], SUMMARY_HEADER);
    assert_eq!(rows.len(), 4);
    let seeds: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["3", "4", "5"]);
    assert!(!first.contains(&b'\r'));

    let again = run(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert!(again.status.success());
    assert_eq!(fs::read(&summary).unwrap(), first);
}

#[test]
fn spacing_seed_overrides_base_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(dir.path(), r#"["static_opt"]"#, r#""base_seed": 1, "replications": 2"#),
    );
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], Some("40"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&dir.path().join("out/summary.csv"));
    let seeds: Vec<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(seeds, ["40", "41"]);

    let bad = run(&["simulate", "--config", cfg.to_str().unwrap()], Some("forty"));
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("SPACING_SEED"));
}

#[test]
fn trace_files_have_headers_and_every_round() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(dir.path(), r#"["fkors", {"fixed_interval": 4}]"#, r#""seeds": [9]"#),
    );
    let out = run(&["simulate", "--config", cfg.to_str().unwrap(), "--trace"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let trace = lines(&dir.path().join("out/trace_fkors_seed9.csv"));
    assert_eq!(
        trace[0],
        "t,epoch,state_fake,state_true,conv_rate,bid,price,win,conversion,payment,reward_accounted,reward_true"
    );
    assert_eq!(trace.len(), 601);
    let epochs = lines(&dir.path().join("out/epochs_fkors_seed9.csv"));
    assert!(epochs[0].starts_with("epoch,start,length,converted"));
    assert!(epochs.len() > 2);
    let periodic = lines(&dir.path().join("out/trace_fixed_interval_4_seed9.csv"));
    assert_eq!(periodic.len(), 601);
    assert!(!dir.path().join("out/epochs_fixed_interval_4_seed9.csv").exists());
}

#[test]
fn bench_writes_summary_and_states() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{
  "market": {"type": "atoms", "atoms": [[1.0, 1.0, 1.0]]},
  "reward": {"type": "cap_linear", "cap": 2},
  "rho": 0.5,
  "T": 100,
  "m": 2,
  "algorithms": ["fkors"]
}"#;
    let cfg = write_config(dir.path(), text);
    let out_dir = dir.path().join("bench");
    let out = run(
        &["bench", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = lines(&out_dir.join("bench_summary.csv"));
    assert_eq!(summary[0], "m,rho,bid1_at_m,opt_value,pay,slack,cycle_length,static_value,pivots");
    let fields: Vec<&str> = summary[1].split(',').collect();
    let opt: f64 = fields[3].parse().unwrap();
    assert!((opt - 1.0).abs() < 1e-9);
    let states = lines(&out_dir.join("bench.csv"));
    assert_eq!(states[0], "state,win,pay,pi,reach,mixture");
    assert_eq!(states.len(), 3);
}

#[test]
fn warmup_curve_to_stdout_and_file() {
    let out = run(&["warmup-curve", "--rho-min", "0.01", "--rho-max", "0.25", "--points", "4"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "rho,ratio");
    assert_eq!(rows.len(), 5);
    let last: Vec<f64> = rows[4].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 0.25);
    assert!((last[1] - 0.973).abs() < 0.005);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    let out = run(&["warmup-curve", "--points", "50", "--out", path.to_str().unwrap()], None);
    assert!(out.status.success());
    assert_eq!(lines(&path).len(), 51);
}

#[test]
fn regret_sweep_aggregates_each_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &config(dir.path(), r#"["fkors", "static_opt"]"#, r#""base_seed": 0, "replications": 2"#),
    );
    let out = run(
        &["regret-sweep", "--config", cfg.to_str().unwrap(), "--T-list", "300,600"],
        None,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = lines(&dir.path().join("out/regret_sweep.csv"));
    assert!(rows[0].starts_with("algorithm,T,runs,m_ref,opt_per_round,mean_utility,mean_regret,regret_ratio"));
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("fkors,300,2,"));
    assert!(rows[4].starts_with("static_opt,600,2,"));
    assert_eq!(lines(&dir.path().join("out/summary.csv")).len(), 9);
}

#[test]
fn invalid_config_names_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = config(dir.path(), r#"["fkors"]"#, r#""seeds": [1]"#).replace("\"rho\": 0.2", "\"rho\": -1");
    let cfg = write_config(dir.path(), &text);
    let out = run(&["simulate", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4") && err.contains("rho"), "{err}");
}

#[test]
fn validate_quick_passes_and_flags_bad_reward() {
    let out = run(&["validate", "--level", "quick"], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("simplex_oracle") && !table.contains("FAIL"));

    let dir = tempfile::tempdir().unwrap();
    let text = config(dir.path(), r#"["fkors"]"#, r#""seeds": [1]"#)
        .replace(r#"{"type": "sqrt"}"#, r#"{"type": "table", "values": [0, 0.5, 0.9, 1.5]}"#);
    let cfg = write_config(dir.path(), &text);
    let out = run(&["validate", "--level", "quick", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let table = String::from_utf8(out.stdout).unwrap();
    let line = table.lines().find(|l| l.starts_with("config_reward")).unwrap();
    assert!(line.contains("FAIL") && line.contains("ℓ = 1"), "{line}");
}
