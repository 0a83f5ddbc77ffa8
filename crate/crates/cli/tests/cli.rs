use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"seed = 3
frames = 12
collection_frames = 10
eval_samples = 200

[system]
antennas = 8
rf_chains = 2
users = 2

[problem]
kind = "powermin"
gamma_bps = [0.5]
"#;

const TRAJECTORY_HEADER: &str = "iter,kind,objective_est,max_constraint_est,nu,step_gamma,step_rho,x_move_norm,wall_ms";

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thp-sim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn run_into(dir: &TempDir, verb: &str) -> (String, String) {
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join(verb);
    let o = sim(&[verb, "--config", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (cfg, out.to_str().unwrap().to_owned())
}

#[test]
fn run_writes_trajectory_with_header() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run_into(&dir, "run");
    let csv = fs::read_to_string(Path::new(&out).join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), TRAJECTORY_HEADER);
    assert_eq!(lines.count(), 12);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join("report.json")).unwrap()).unwrap();
    let keys: Vec<&str> = report.as_object().unwrap().keys().map(|k| k.as_str()).collect();
    let mut expected = vec![
        "verb", "problem", "structure", "seed", "frames", "eval_samples", "projected", "relaxed",
        "projection_delta", "timing", "updates", "stationarity_residual", "converged", "window_from",
    ];
    expected.sort_unstable();
    let mut keys = keys;
    keys.sort_unstable();
    assert_eq!(keys, expected);
    for block in ["projected", "relaxed"] {
        for k in ["objective", "objective_stderr", "rates_nats", "rates_stderr", "rates_bps", "constraint_margins", "max_violation", "samples"] {
            assert!(report[block].get(k).is_some(), "{block}.{k}");
        }
    }
    assert_eq!(report["seed"], 7);
    assert_eq!(report["verb"], "run");
    assert!(Path::new(&out).join("variable.json").exists());
}

#[test]
fn schedule_warnings_go_to_stderr() {
    let dir = TempDir::new().unwrap();
    let o = sim(&["run", "--config", &write_config(dir.path(), SMALL), "--out", dir.path().join("a").to_str().unwrap()]);
    assert!(!String::from_utf8_lossy(&o.stderr).contains("warning"));
    let cfg = write_config(dir.path(), &format!("{SMALL}\n[schedule]\ngamma_exponent = 0.5\n"));
    let o = sim(&["run", "--config", &cfg, "--out", dir.path().join("b").to_str().unwrap()]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: schedule"));
}

#[test]
fn rerun_is_byte_identical() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (_, oa) = run_into(&a, "run");
    let (_, ob) = run_into(&b, "run");
    let read = |d: &str| fs::read(Path::new(d).join("trajectory.csv")).unwrap();
    assert_eq!(read(&oa), read(&ob));
}

#[test]
fn saa_then_eval_round_trip() {
    let dir = TempDir::new().unwrap();
    let (cfg, out) = run_into(&dir, "saa");
    let o = sim(&["eval", "--config", &cfg, "--seed", "7", "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&fs::read_to_string(Path::new(&out).join(name)).unwrap()).unwrap()
    };
    let report = read("report.json");
    let eval = read("eval.json");
    // same held-out stream, so the replay is exact
    assert_eq!(report["projected"]["rates_nats"], eval["rates_nats"]);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("projected:"));
}

#[test]
fn missing_config_exits_2() {
    let o = sim(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/exp.toml"));
}

#[test]
fn malformed_config_reports_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "seed = 1\n[system]\nantennas = 8\nusers = 0\n");
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("exp.toml:4:"), "{err}");
    assert!(err.contains("system.users"), "{err}");

    let cfg = write_config(dir.path(), "seed = 1\n\n[system\n");
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("exp.toml:3:"));

    let cfg = write_config(dir.path(), "seed = 1\nframez = 3\n");
    let o = sim(&["run", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_rejects_mismatched_structure() {
    let dir = TempDir::new().unwrap();
    let (_, out) = run_into(&dir, "run");
    let other = write_config(dir.path(), &SMALL.replace("users = 2", "users = 2\n\n[structure]\nmethod = \"codebook\""));
    let o = sim(&["eval", "--config", &other, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_suites_pass() {
    let dir = TempDir::new().unwrap();
    let json = dir.path().join("grad.json");
    let o = sim(&["gradcheck", "--instances", "5", "--out", json.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let lines: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(lines.as_array().unwrap().len(), 3);

    let o = sim(&["qpcheck", "--instances", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 2);
}

#[test]
fn config_reference_matches_docs() {
    let o = sim(&["config-reference"]);
    assert!(o.status.success());
    let docs = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.md")).unwrap();
    assert_eq!(String::from_utf8_lossy(&o.stdout), docs);
}
