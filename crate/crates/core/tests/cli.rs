use std::path::PathBuf;
use std::process::Command;

use brickyard::scenario::Scenario;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brickyard"))
}

fn scenario_file(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn shipped_scenarios_match_the_builders() {
    assert_eq!(Scenario::from_path(&scenario_file("default.json")).unwrap(), Scenario::default_mission());
    assert_eq!(Scenario::from_path(&scenario_file("single_red.json")).unwrap(), Scenario::single_red());
}

#[test]
fn run_writes_logs_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", scenario_file("single_red.json").to_str().unwrap(), "--seed", "5", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("completed=true points=10"), "{stdout}");
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 5);
    assert_eq!(metrics["slots_filled"], 1);
    for f in ["trajectory.csv", "servo_errors.csv", "tasks.csv"] {
        assert!(dir.path().join(f).is_file());
    }
}

#[test]
fn run_honours_time_limit_and_faults() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", scenario_file("single_red.json").to_str().unwrap()])
        .args(["--max-time", "20", "--dt", "0.1", "--faults", "pick=1", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let metrics: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["completed"], false);
    assert_eq!(metrics["ticks"], 200);
}

#[test]
fn bad_fault_spec_fails() {
    let out = bin()
        .args(["run", scenario_file("single_red.json").to_str().unwrap(), "--faults", "pick=2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let out = bin()
        .args(["run", scenario_file("single_red.json").to_str().unwrap(), "--faults", "lightning=0.1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn validate_reports_errors_with_their_field() {
    let ok = bin().args(["validate", scenario_file("default.json").to_str().unwrap()]).output().unwrap();
    assert!(ok.status.success());

    let mut s = Scenario::single_red();
    s.channels[0].layers = vec![vec![brickyard::world::BrickKind::Orange; 3]];
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overflow.json");
    std::fs::write(&path, s.to_json()).unwrap();
    let bad = bin().args(["validate", path.to_str().unwrap()]).output().unwrap();
    assert!(!bad.status.success());
    let err = String::from_utf8(bad.stderr).unwrap();
    assert!(err.contains("channels[0]"), "{err}");

    std::fs::write(&path, r#"{"name": "x", "arena": [1, 2]}"#).unwrap();
    let bad = bin().args(["validate", path.to_str().unwrap()]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn slots_prints_one_row_per_slot() {
    let out = bin().args(["slots", scenario_file("default.json").to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("slot,channel,layer,index,kind,offset_m,x,y,z,yaw"));
    assert_eq!(rows.count(), 60);
}

#[test]
fn builtin_scenario_round_trips() {
    let out = bin().args(["scenario", "single-red"]).output().unwrap();
    assert!(out.status.success());
    let s = Scenario::from_json(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(s, Scenario::single_red());
}
