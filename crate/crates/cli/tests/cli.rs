use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn cidnet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cidnet"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Failures exit nonzero with exactly one `error:` line.
fn assert_one_line_failure(out: &Output) -> String {
    assert!(!out.status.success());
    let err = stderr(out);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with("error: "), "{err}");
    lines[0].to_string()
}

#[test]
fn inspect_model_succeeds() {
    let tmp = TempDir::new().unwrap();
    let out = cidnet(tmp.path(), &["inspect-model", "--variant", "cid"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("1093128"), "{text}");
}

#[test]
fn show_config_round_trips_through_a_file() {
    let tmp = TempDir::new().unwrap();
    let out = cidnet(tmp.path(), &["show-config"]);
    assert!(out.status.success());
    fs::write(tmp.path().join("c.toml"), &out.stdout).unwrap();
    let again = cidnet(tmp.path(), &["--config", "c.toml", "show-config"]);
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn missing_config_file_is_reported() {
    let tmp = TempDir::new().unwrap();
    let line = assert_one_line_failure(&cidnet(
        tmp.path(),
        &["--config", "absent.toml", "simulate"],
    ));
    assert!(line.contains("absent.toml"), "{line}");
}

#[test]
fn invalid_config_is_reported() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("bad.toml"),
        "dataset.split = [0.5, 0.5, 0.5]\n",
    )
    .unwrap();
    let line = assert_one_line_failure(&cidnet(
        tmp.path(),
        &["--config", "bad.toml", "show-config"],
    ));
    assert!(line.contains("split"), "{line}");

    fs::write(
        tmp.path().join("typo.toml"),
        "trainer.learning_rate = 0.1\n",
    )
    .unwrap();
    assert_one_line_failure(&cidnet(
        tmp.path(),
        &["--config", "typo.toml", "show-config"],
    ));
}

#[test]
fn commands_without_data_fail_cleanly() {
    let tmp = TempDir::new().unwrap();
    for cmd in ["train", "infer", "eval"] {
        assert_one_line_failure(&cidnet(tmp.path(), &[cmd]));
    }
    assert_one_line_failure(&cidnet(
        tmp.path(),
        &["export-bmode", "none.bin", "out.pgm"],
    ));
}

#[test]
fn unknown_arguments_are_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let out = cidnet(tmp.path(), &["inspect-model", "--variant", "resnet"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("resnet"));
}
