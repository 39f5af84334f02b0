use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ngsc_cli::replay::{replay_messages, replay_to};
use ngsc_core::protocol::{MessageBody, SessionMessage};
use ngsc_core::sim::compute_metrics;
use ngsc_core::EpisodeLog;

fn ngsc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ngsc"));
    c.env_remove("NGSC_LOG_DIR").env("RUST_LOG", "warn");
    c
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("study.json");
    std::fs::write(&path, body).unwrap();
    path
}

const STUDY: &str = r#"{
  "environment": {"sampler": {"seed": 5, "count": 3, "config": {"obstacle_on_path": true}}},
  "seeds": [1, 2],
  "output": {"dir": "out"}
}"#;

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(dir) {
        out.push((entry.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&entry).unwrap()));
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn simulate_writes_one_summary_row_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STUDY);
    let out = ngsc().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    for mode in ["DC", "NG", "LB", "OA"] {
        assert!(stdout.lines().any(|l| l.starts_with(mode)), "{stdout}");
    }
    let summary = std::fs::read_to_string(dir.path().join("out/summary.csv")).unwrap();
    let modes: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["DC", "NG", "LB", "OA"]);
    let episodes = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 3 * 4 * 2);
    assert_eq!(std::fs::read_dir(dir.path().join("out/logs")).unwrap().count(), 24);
}

#[test]
fn missing_config_fails_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("never");
    let out = ngsc()
        .args(["simulate", "--config"])
        .arg(dir.path().join("absent.json"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn config_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        write_config(dir.path(), "{\n  \"environment\": {\"sampler\": {\"seed\": 1}},\n  \"modes\": [\"ZZ\"]\n}\n");
    let out = ngsc().args(["simulate", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 3"), "{stderr}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STUDY);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let status =
            ngsc().args(["simulate", "--seed", "7", "--config"]).arg(&cfg).arg("--out").arg(out).status().unwrap();
        assert!(status.success());
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.len(), 2 + 3 * 4);
    assert_eq!(fa, fb);
}

#[test]
fn log_dir_variable_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), STUDY);
    let target = dir.path().join("from-env");
    let status =
        ngsc().env("NGSC_LOG_DIR", &target).args(["simulate", "--mode", "DC", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    assert!(target.join("summary.csv").is_file());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn fisher_field_single_goal_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ellipses.csv");
    let status = ngsc()
        .args(["fisher-field", "--seed", "3", "--goals", "place", "--resolution", "20", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,semi_major,semi_minor,angle,area,reason"));
    assert_eq!(lines.count(), 400);
}

fn simulated_log(dir: &Path) -> PathBuf {
    let cfg = write_config(dir, STUDY);
    let status = ngsc().args(["simulate", "--mode", "NG", "--seed", "3", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    dir.join("out/logs/env000_NG_seed3.jsonl")
}

#[test]
fn replay_reproduces_ticks_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulated_log(dir.path());
    let log = EpisodeLog::read_file(&path).unwrap();
    let out = ngsc().arg("replay").arg(&path).args(["--speed", "50"]).output().unwrap();
    assert!(out.status.success());
    let messages: Vec<SessionMessage> =
        String::from_utf8(out.stdout).unwrap().lines().map(|l| SessionMessage::parse(l).unwrap()).collect();
    let updates = messages.iter().filter(|m| matches!(m.body, MessageBody::StateUpdate { .. })).count();
    assert_eq!(updates, log.ticks.len());
    match &messages.last().unwrap().body {
        MessageBody::EpisodeEnd { outcome, metrics, .. } => {
            assert_eq!(*outcome, log.outcome);
            assert_eq!(metrics.unwrap(), compute_metrics(&log).unwrap());
        }
        other => panic!("unexpected final message {other:?}"),
    }
}

#[test]
fn replay_speed_scales_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let mut log = EpisodeLog::read_file(&simulated_log(dir.path())).unwrap();
    log.ticks.truncate(31);
    log.outcome.ticks = 31;
    let timed = |speed: f64| {
        let start = Instant::now();
        assert_eq!(replay_to(&log, speed, std::io::sink()).unwrap(), 31);
        start.elapsed().as_secs_f64()
    };
    let normal = timed(1.0);
    let double = timed(2.0);
    let tick = 1.0 / 30.0;
    assert!((normal - 31.0 * tick).abs() <= tick, "{normal}");
    assert!((double - normal / 2.0).abs() <= tick / 2.0, "{normal} {double}");
    assert_eq!(replay_messages(&log, "x").len(), 32);
}

#[test]
fn corrupt_log_reports_first_bad_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = simulated_log(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[7] = "{\"kind\":\"tick\"}";
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, lines.join("\n")).unwrap();
    let out = ngsc().arg("replay").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 8"), "{stderr}");
}
