//! Exit-code contract and output files of the command-line interface.

use std::process::Command;

fn servnet() -> Command {
    Command::new(env!("CARGO_BIN_EXE_servnet"))
}

const PASSING: &str = r#"
name = "cli-pass"
seed = 42
until = 120
weight_mode = "unit"
election_period = 0

[[nodes]]
id = "a1"
role = "authority"

[[nodes]]
id = "s1"
authority = "a1"

[[nodes]]
id = "s2"
authority = "a1"

[[trades]]
tick = 5
initiator = "s1"
responder = "s2"
share_size = 100
duration = 20

[[expectations]]
kind = "snapshot"
node = "s1"
field = "gr"
op = "gt"
value = "0"

[[expectations]]
kind = "snapshot"
node = "s2"
field = "gr"
op = "gt"
value = "0"
"#;

#[test]
fn run_passing_scenario_exits_zero_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, PASSING).unwrap();
    let out = dir.path().join("out");
    let output = servnet()
        .args(["run"])
        .arg(&file)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    for artifact in ["events.jsonl", "snapshot.csv", "report.txt"] {
        assert!(out.join(artifact).is_file(), "{artifact} missing");
    }
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("status: PASS"));
    // Two positive reputations in the snapshot.
    let snapshot = std::fs::read_to_string(out.join("snapshot.csv")).unwrap();
    assert!(snapshot.contains("s1,1,1.000000,0.000000,1.000000,a1"));
    assert!(snapshot.contains("s2,1,1.000000,0.000000,1.000000,a1"));
}

#[test]
fn failing_expectation_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    let failing = PASSING.to_string()
        + r#"
[[expectations]]
kind = "event-count"
event = "contract-bound"
op = "eq"
value = 99
"#;
    std::fs::write(&file, failing).unwrap();
    let output = servnet()
        .args(["run"])
        .arg(&file)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("[FAIL] count(contract-bound) == 99"));
}

#[test]
fn malformed_scenario_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, "name = \"broken\nseed = ").unwrap();
    let output = servnet().args(["run"]).arg(&file).output().unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn undeclared_node_exits_two_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, PASSING.replace("responder = \"s2\"", "responder = \"ghost\"")).unwrap();
    let output = servnet().args(["run"]).arg(&file).output().unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ghost"), "{stderr}");
}

#[test]
fn seed_override_changes_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, PASSING).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(servnet()
        .args(["run"])
        .arg(&file)
        .arg("--out")
        .arg(&out_a)
        .output()
        .unwrap()
        .status
        .success());
    assert!(servnet()
        .args(["run"])
        .arg(&file)
        .args(["--seed", "999"])
        .arg("--out")
        .arg(&out_b)
        .output()
        .unwrap()
        .status
        .success());
    let a = std::fs::read_to_string(out_a.join("events.jsonl")).unwrap();
    let b = std::fs::read_to_string(out_b.join("events.jsonl")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn attack_suite_passes_and_writes_per_scenario_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let output = servnet()
        .args(["attack-suite", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert_eq!(stdout.matches("PASS").count(), 9, "8 scenarios + summary");
    assert!(dir
        .path()
        .join("contract-impersonation/events.jsonl")
        .is_file());
}

#[test]
fn fairness_prints_matching_thresholds() {
    let output = servnet()
        .args(["fairness", "--m1", "20", "--t2", "100", "--m2", "10"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("analytic threshold T1 = 58"));
    assert!(stdout.contains("scan threshold     T1 = 58"));
    assert!(stdout.contains("agreement: yes"));
    assert!(stdout.contains("delta 0.000000"));
}

#[test]
fn fairness_rejects_degenerate_periods() {
    let output = servnet()
        .args(["fairness", "--m1", "1", "--t2", "10", "--m2", "10"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, PASSING).unwrap();
    let out = dir.path().join("env-out");
    let output = servnet()
        .args(["run"])
        .arg(&file)
        .env("SERVNET_OUT_DIR", &out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    assert!(out.join("events.jsonl").is_file());
}

#[test]
fn reports_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.toml");
    std::fs::write(&file, PASSING).unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        assert!(servnet()
            .args(["run"])
            .arg(&file)
            .arg("--out")
            .arg(out)
            .output()
            .unwrap()
            .status
            .success());
    }
    for artifact in ["events.jsonl", "snapshot.csv", "report.txt"] {
        let a = std::fs::read(out_a.join(artifact)).unwrap();
        let b = std::fs::read(out_b.join(artifact)).unwrap();
        assert_eq!(a, b, "{artifact} not reproducible");
    }
}
