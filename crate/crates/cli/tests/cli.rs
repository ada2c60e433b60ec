//! End-to-end behaviour of the `stablesde` binary: exit codes, config
//! layering, manifests and run directories.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_stablesde"));
    c.env_remove("STABLESDE_OUT");
    c
}

fn run(root: &Path, args: &[&str]) -> Output {
    bin().arg(args[0]).arg("--out").arg(root).args(&args[1..]).output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text
        .lines()
        .find_map(|l| l.strip_prefix("run directory: "))
        .unwrap_or_else(|| panic!("no run directory in {text}"));
    PathBuf::from(line)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

const VERIFY13: &[&str] = &["verify", "--preset", "example13", "--alpha", "1.5", "--beta", "1"];

#[test]
fn passing_verification_exits_zero() {
    let root = tempfile::tempdir().unwrap();
    let out = run(root.path(), VERIFY13);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = run_dir(&out);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], Value::Bool(true));
    let m = manifest(&dir);
    assert_eq!(m["exit_status"], 0);
    assert_eq!(m["command"], "verify");
    let hash = m["config_hash"].as_str().unwrap();
    assert_eq!(hash.len(), 64);
    assert!(dir.file_name().unwrap().to_str().unwrap().ends_with(&hash[..16]));
}

#[test]
fn failing_check_exits_one() {
    let root = tempfile::tempdir().unwrap();
    let out = run(root.path(), &["verify", "--preset", "custom", "--drift", "+x", "--sigma", "1"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(manifest(&run_dir(&out))["exit_status"], 1);
}

#[test]
fn unknown_key_is_a_usage_error_naming_the_key() {
    let root = tempfile::tempdir().unwrap();
    let out = run(root.path(), &["verify", "--set", "sim.stepp=0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepp"));

    let cfg = root.path().join("bad.json");
    std::fs::write(&cfg, r#"{"alpah": 1.5}"#).unwrap();
    let out = run(root.path(), &["verify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("alpah"));
}

#[test]
fn invalid_parameter_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let out = run(root.path(), &["stable-test", "--alpha", "2.5"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(root.path(), &["sample", "--set", "sim.step=-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numeric_blow_up_exits_three_and_leaves_no_run() {
    let root = tempfile::tempdir().unwrap();
    let out = run(
        root.path(),
        &[
            "sample", "--preset", "example14", "--alpha", "0.8", "--beta", "1.5", "--n", "100",
            "--step", "0.5", "--scheme", "explicit", "--set", "sim.n_paths=2", "--set", "burn_in=50",
        ],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numeric"));
    assert_eq!(std::fs::read_dir(root.path()).unwrap().count(), 0);
}

#[test]
fn repeated_runs_get_fresh_directories() {
    let root = tempfile::tempdir().unwrap();
    let a = run_dir(&run(root.path(), VERIFY13));
    let b = run_dir(&run(root.path(), VERIFY13));
    assert_ne!(a, b);
    assert!(b.to_str().unwrap().ends_with(".1"));
    assert_eq!(manifest(&a)["config_hash"], manifest(&b)["config_hash"]);
}

#[test]
fn flags_and_dotted_keys_override_the_config_file() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 1.2, "n": 50, "sim": {"seed": 3}}"#).unwrap();
    let out = run(
        root.path(),
        &["sample", "--preset", "additive", "--config", cfg.to_str().unwrap(), "--alpha", "1.4", "--set", "sim.n_paths=5",
          "--set", "burn_in=1"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&run_dir(&out));
    assert_eq!(m["config"]["alpha"], 1.4);
    assert_eq!(m["config"]["n"], 50);
    assert_eq!(m["config"]["sim"]["seed"], 3);
    assert_eq!(m["config"]["sim"]["n_paths"], 5);
}

#[test]
fn manifest_replays_to_identical_outputs() {
    let root = tempfile::tempdir().unwrap();
    let first = run_dir(&run(
        root.path(),
        &["sample", "--preset", "additive", "--n", "60", "--set", "sim.n_paths=4", "--set", "burn_in=1", "--seed", "9"],
    ));
    let replay_root = tempfile::tempdir().unwrap();
    let mpath = first.join("manifest.json");
    let out = bin()
        .args(["sample", "--threads", "3", "--config"])
        .arg(&mpath)
        .arg("--out")
        .arg(replay_root.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let second = run_dir(&out);
    for name in ["samples.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn tampered_manifest_is_rejected() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_dir(&run(root.path(), VERIFY13));
    let mut m = manifest(&dir);
    m["config"]["alpha"] = Value::from(1.1);
    let path = root.path().join("tampered.json");
    std::fs::write(&path, m.to_string()).unwrap();
    let out = run(root.path(), &["verify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config_hash"));
}

#[test]
fn output_root_defaults_to_environment_variable() {
    let root = tempfile::tempdir().unwrap();
    let out = bin().args(VERIFY13).env("STABLESDE_OUT", root.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(run_dir(&out).starts_with(root.path()));
}

#[test]
fn field_formats_are_selectable() {
    let root = tempfile::tempdir().unwrap();
    for (fmt, file) in [("csv", "field.csv"), ("ndjson", "field.ndjson"), ("json", "field.json")] {
        let out = run(root.path(), &["field", "--preset", "example13", "--beta", "1", "--format", fmt]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let dir = run_dir(&out);
        assert!(dir.join(file).is_file(), "{fmt}");
        assert!(dir.join("summary.json").is_file());
    }
}
