//! End-to-end checks of the command-line surface and its exit codes.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dynemb"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dynemb_cli_{name}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn missing_command_exits_with_usage_error() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_command_exits_with_usage_error() {
    let out = bin().arg("launch").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_config_exits_with_config_error() {
    let dir = scratch("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "agents = walker\n").unwrap();
    let out = bin().args(["run", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config error"), "{err}");
}

#[test]
fn missing_config_file_exits_with_config_error() {
    let out = bin()
        .args(["run", "/nonexistent/path.cfg"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_run_aggregate_heatmap() {
    let dir = scratch("pipeline");
    let cfg_path = dir.join("exp.cfg");
    std::fs::write(
        &cfg_path,
        format!(
            "agents = q,q+ir\ntasks = 1\nepisodes_per_task = 6\nseeds = 0\nn_max = 60\nout_dir = {}\n",
            dir.join("out").display()
        ),
    )
    .unwrap();

    let out = bin()
        .args(["explore", cfg_path.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("out/resolved.cfg").exists());
    assert!(dir.join("out/metrics_q_0.csv").exists());
    assert!(dir.join("out/visits_q+ir_0.pgm").exists());

    let out = bin()
        .args([
            "aggregate",
            dir.join("out").to_str().unwrap(),
            "--window",
            "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.join("out/summary.csv").exists());

    let snapshot = dir.join("out/snapshot_q+ir_0.jsonl");
    let heatmap = dir.join("ir.pgm");
    let out = bin()
        .args([
            "heatmap",
            snapshot.to_str().unwrap(),
            heatmap.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(heatmap.exists());

    // Runtime errors (unreadable inputs) exit 2.
    let out = bin()
        .args(["aggregate", dir.join("nothing_here").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
