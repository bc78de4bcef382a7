use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn navbridge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_navbridge")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = navbridge(dir.path(), &["generate", "--seed", "42", "--out", out, "--set", "experiment.n_scenes=2"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(o.stderr.is_empty());
    }
    let a = fs::read_to_string(dir.path().join("a/episodes.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("b/episodes.json")).unwrap();
    assert_eq!(a, b);
    assert!(dir.path().join("a/scenes/scene_001.scene").exists());
    assert!(dir.path().join("a/scenes/narrow_doorway.scene").exists());
}

#[test]
fn run_then_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = navbridge(dir.path(), &["generate", "--seed", "5", "--out", "suite", "--set", "experiment.n_scenes=1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for (mode, log) in [("A", "a.traj"), ("C", "c.traj")] {
        let o = navbridge(
            dir.path(),
            &[
                "run",
                "--suite",
                "suite",
                "--episode",
                "scene_000_ep03",
                "--mode",
                mode,
                "--physics",
                "--bus",
                "--log",
                log,
            ],
        );
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let result: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        assert_eq!(result["episode_id"], "scene_000_ep03");
        let o = navbridge(dir.path(), &["replay", log, "--check"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert_eq!(o.stdout, fs::read(dir.path().join(log)).unwrap());
    }
}

#[test]
fn run_defaults_log_name_and_uses_default_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = navbridge(dir.path(), &["run", "--episode", "narrow_doorway_ep06"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("narrow_doorway_ep06.traj").exists());
}

#[test]
fn experiment_writes_results_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": {"n_scenes": 1, "n_episodes": 2, "include_fixtures": false, "seed": 3},
                  "run": {"max_agent_steps": 400}}"#;
    fs::write(dir.path().join("exp.json"), cfg).unwrap();
    let o = navbridge(
        dir.path(),
        &["experiment", "--config", "exp.json", "--set", "run.max_agent_steps=300", "--out", "out", "--logs"],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(o.stderr.is_empty());
    let csv = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["configurations"].as_array().unwrap().len(), 4);
    assert_eq!(report["effective_config"]["run"]["max_agent_steps"], 300);
    assert_eq!(report["effective_config"]["experiment"]["seed"], 3);
    assert_eq!(fs::read_dir(dir.path().join("out/logs")).unwrap().count(), 8);
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = navbridge(dir.path(), &["experiment", "--set", "run.max_step=3"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let err = stderr(&o);
    assert!(err.contains("run.max_step") && err.contains("run.max_agent_steps"), "{err}");
}

#[test]
fn usage_and_runtime_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(navbridge(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(navbridge(dir.path(), &["run"]).status.code(), Some(1));
    assert_eq!(navbridge(dir.path(), &["run", "--episode", "nope"]).status.code(), Some(1));
    assert_eq!(
        navbridge(dir.path(), &["run", "--episode", "narrow_doorway_ep06", "--mode", "B"]).status.code(),
        Some(1)
    );
    assert_eq!(navbridge(dir.path(), &["replay", "missing.traj"]).status.code(), Some(2));
    fs::write(dir.path().join("junk.traj"), "not a log\n").unwrap();
    assert_eq!(navbridge(dir.path(), &["replay", "junk.traj"]).status.code(), Some(2));
    let help = navbridge(dir.path(), &["--help"]);
    assert_eq!(help.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&help.stdout).contains("bench-bus"));
}

#[test]
fn replay_check_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let o = navbridge(dir.path(), &["run", "--episode", "narrow_doorway_ep06", "--log", "x.traj"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("x.traj")).unwrap();
    let tampered = text.replacen("MOVE_FORWARD", "TURN_LEFT", 1);
    assert_ne!(text, tampered);
    fs::write(dir.path().join("y.traj"), tampered).unwrap();
    assert_eq!(navbridge(dir.path(), &["replay", "y.traj", "--check", "--out", "z.traj"]).status.code(), Some(2));
}

#[test]
fn bench_bus_reports_latency() {
    let dir = tempfile::tempdir().unwrap();
    let o = navbridge(dir.path(), &["bench-bus", "--payload", "32", "--iterations", "200"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["payload_size"], 32);
    assert!(rows[0]["mean_latency_s"].as_f64().unwrap() > 0.0);
    assert_eq!(navbridge(dir.path(), &["bench-bus", "--iterations", "10"]).status.code(), Some(1));
}
