//! Binary-level contract: exit codes, flag handling, and artifact layout.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_purelab"))
}

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.toml")
}

fn smoke_text() -> String {
    std::fs::read_to_string(smoke_config()).unwrap()
}

fn run_with_config(text: &str, cmd: &str) -> Output {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, text).unwrap();
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process should exit, not be signaled")
}

#[test]
fn full_run_succeeds_and_creates_missing_output_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deep/nested/out");
    let t0 = Instant::now();
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
    assert!(t0.elapsed().as_secs() < 60, "smoke config exceeded its time budget");
    assert!(out.join("report/report.csv").exists());
    assert!(out.join("analysis/distributions.csv").exists());

    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("simulate:"), "progress lines expected without --quiet");
    assert!(stdout.contains("combined"), "accuracy table expected");
}

#[test]
fn quiet_suppresses_progress_but_keeps_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin()
        .arg("run")
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(dir.path().join("out"))
        .arg("--quiet")
        .output()
        .unwrap();
    assert_eq!(exit_code(&output), 0);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(!stdout.contains("simulate:"));
    assert!(stdout.contains("combined"));
}

#[test]
fn usage_errors_exit_2() {
    // Unknown subcommand and missing required flag are both usage errors.
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(exit_code(&out), 2);
    let out = bin().arg("simulate").output().unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn unknown_config_key_exits_2() {
    let text = smoke_text() + "\n[extra]\nmystery = 1\n";
    let out = run_with_config(&text, "simulate");
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn missing_seeds_section_exits_2() {
    let text = smoke_text().replace("[seeds]", "[seeds_disabled]");
    let out = run_with_config(&text, "simulate");
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn wrong_version_exits_2() {
    let text = smoke_text().replace("version = 1", "version = 3");
    let out = run_with_config(&text, "simulate");
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn unwritable_output_dir_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    // A path through a regular file cannot be created as a directory.
    let blocker = dir.path().join("blocker");
    std::fs::write(&blocker, b"x").unwrap();
    let out = bin()
        .arg("simulate")
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(blocker.join("out"))
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn stage_without_prerequisites_exits_1() {
    let out = run_with_config(&smoke_text(), "normalize");
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("simulate"));
}

#[test]
fn analyze_without_inputs_exits_2() {
    let out = run_with_config(&smoke_text(), "analyze");
    assert_eq!(exit_code(&out), 2);
}

#[test]
fn master_seed_overrides_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &Path| {
        let output = bin()
            .arg("run")
            .arg("--config")
            .arg(smoke_config())
            .arg("--out")
            .arg(out)
            .arg("--seed")
            .arg(seed)
            .arg("--quiet")
            .output()
            .unwrap();
        assert_eq!(exit_code(&output), 0, "{}", String::from_utf8_lossy(&output.stderr));
        std::fs::read(out.join("report/report.csv")).unwrap()
    };
    let a1 = run("7", &dir.path().join("a1"));
    let a2 = run("7", &dir.path().join("a2"));
    let b = run("8", &dir.path().join("b"));
    assert_eq!(a1, a2, "same master seed must reproduce bytes");
    // Different master seed changes the simulated data; raw frames must differ.
    let raw1 = std::fs::read(dir.path().join("a1/raw/sp6_f100/normal.praw")).unwrap();
    let raw2 = std::fs::read(dir.path().join("b/raw/sp6_f100/normal.praw")).unwrap();
    assert_ne!(raw1, raw2, "different master seed must change the simulation");
    let _ = b;
}

#[test]
fn eval_after_run_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .arg("run")
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    let before = std::fs::read(out.join("report/report.csv")).unwrap();
    let status = bin()
        .arg("eval")
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(&out)
        .arg("--quiet")
        .stdout(std::process::Stdio::null())
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read(out.join("report/report.csv")).unwrap(), before);
}
