//! The compiled `hvarray` binary: exit codes and file output.

use std::fs;
use std::process::{Command, Output};

fn hvarray(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hvarray")).args(args).output().unwrap()
}

#[test]
fn read_to_file_and_stdout_match() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("read.csv");
    let out = hvarray(&["read", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = hvarray(&["read"]);
    assert_eq!(fs::read(&path).unwrap(), stdout.stdout);
    assert!(stdout.stdout.starts_with(b"t_ns,i_pad_A,"));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, "[device]\nresistance = 1000.0\n\n[sweep]\nsteps = 3\n").unwrap();
    let out = hvarray(&["iv-sweep", "--config", cfg.to_str().unwrap(), "--override", "sweep.v_stop=11", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().nth(3).unwrap().starts_with("1.1000000000000000e1,"));
}

#[test]
fn config_errors_exit_2() {
    let out = hvarray(&["read", "--override", "experiment.row=16"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("experiment.row"));
    assert!(out.stdout.is_empty());

    assert_eq!(hvarray(&["write", "--override", "experiment.pulse_width_ns=29"]).status.code(), Some(2));
    assert_eq!(hvarray(&["form"]).status.code(), Some(2));
    assert_eq!(hvarray(&["read", "--config", "/nonexistent/exp.toml"]).status.code(), Some(2));
}

#[test]
fn nonconvergence_exits_3() {
    let out = hvarray(&["read", "--override", "solver.max_iter=1", "--override", "device.resistance=500"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn forming_failure_exits_4_with_a_trace() {
    let out = hvarray(&["form", "--override", "device.kind=bistable", "--override", "device.v_form=25"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8(out.stdout).unwrap().trim_end().ends_with(",forming failed"));
}
