use std::path::Path;
use std::process::{Command, Output};

use skydive_core::config::{Config, Scenario};
use skydive_core::session::{EpisodeLog, Outcome};

fn skydive(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skydive"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("SKYDIVE_DATA_DIR")
        .output()
        .unwrap()
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

/// Short scenario and quick config files in `dir`.
fn fixtures(dir: &Path) {
    let s = Scenario { timeout: 1.0, ..Scenario::default() };
    std::fs::write(dir.join("short.toml"), s.to_toml()).unwrap();
    let mut c = Config::default();
    c.sim.settle_time = 1.0;
    std::fs::write(dir.join("quick.toml"), c.to_toml()).unwrap();
}

#[test]
fn run_writes_log_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let o = skydive(&["--config", "quick.toml", "--scenario", "short.toml", "--seed", "7", "run", "--out", "out"], dir.path());
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stdout}\n{stderr}");
    assert!(stdout.contains("outcome Timeout"), "{stdout}");
    let log = EpisodeLog::load(&dir.path().join("out/straight-150-7.jsonl")).unwrap();
    assert_eq!(log.header.seed, 7);
    assert_eq!(log.outcome(), Outcome::Timeout);
    assert_eq!(log.records.len(), 240);
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/straight-150-7.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["outcome"], "timeout");

    // export and replay of the written log
    let o = skydive(&["export", "out/straight-150-7.jsonl", "--out", "e.csv"], dir.path());
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("e.csv")).unwrap().lines().count(), 241);
    let o = skydive(&["replay", "out/straight-150-7.jsonl", "--resim"], dir.path());
    let (stdout, _) = text(&o);
    assert!(o.status.success());
    assert!(stdout.contains("replayed 240 ticks"), "{stdout}");
}

#[test]
fn rate_override_changes_tick_spacing() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    let o = skydive(&["--config", "quick.toml", "--scenario", "short.toml", "--rate", "120", "run", "--out", "."], dir.path());
    assert!(o.status.success(), "{:?}", text(&o));
    let log = EpisodeLog::load(&dir.path().join("straight-150-1.jsonl")).unwrap();
    assert_eq!(log.header.rate, 120.0);
    assert_eq!(log.records.len(), 120);
}

#[test]
fn unknown_flag_prints_usage_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = skydive(&["run", "--bogus"], dir.path());
    let (_, stderr) = text(&o);
    assert!(!o.status.success());
    assert!(stderr.contains("Usage"), "{stderr}");
    assert!(!skydive(&["fly"], dir.path()).status.success());
}

#[test]
fn replay_of_truncated_log_names_the_record() {
    let dir = tempfile::tempdir().unwrap();
    fixtures(dir.path());
    assert!(skydive(&["--config", "quick.toml", "--scenario", "short.toml", "run", "--out", "."], dir.path()).status.success());
    let full = std::fs::read_to_string(dir.path().join("straight-150-1.jsonl")).unwrap();
    let keep: Vec<&str> = full.lines().take(11).collect();
    std::fs::write(dir.path().join("cut.jsonl"), keep.join("\n") + "\n{\"kind\":\"tick\",\"ti").unwrap();
    let o = skydive(&["replay", "cut.jsonl"], dir.path());
    let (_, stderr) = text(&o);
    assert!(!o.status.success());
    assert!(stderr.contains("corrupt log record 11"), "{stderr}");
}

#[test]
fn calibrate_hits_the_target_speed() {
    let dir = tempfile::tempdir().unwrap();
    let o = skydive(&["calibrate", "--target-speed", "61", "--out", "patched.toml"], dir.path());
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.starts_with("[aero]\nc_drag_max = "), "{stdout}");
    let patched = Config::load(&dir.path().join("patched.toml")).unwrap();
    let value: f64 = stdout.lines().nth(1).unwrap().split('=').nth(1).unwrap().trim().parse().unwrap();
    assert_eq!(patched.aero.c_drag_max, value);
    // the shipped coefficient is already calibrated to 61 m/s
    assert!((value / Config::default().aero.c_drag_max - 1.0).abs() < 0.02);
}

#[test]
fn imitate_reports_the_hold() {
    let dir = tempfile::tempdir().unwrap();
    let o = skydive(&["imitate", "--pattern", "turning", "--duration", "30"], dir.path());
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.contains("held within"), "{stdout}");
    let o = skydive(&["imitate", "--duration", "30", "--trainee", "kind = \"pure_delay\"\nt_delay = 0.5"], dir.path());
    assert!(o.status.success(), "{:?}", text(&o));
    let o = skydive(&["imitate", "--pattern", "nope"], dir.path());
    assert!(!o.status.success());
    assert!(text(&o).1.contains("pattern 'nope'"));
}
