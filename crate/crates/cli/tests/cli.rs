use std::fs;
use std::process::{Command, Output};

fn hrnlse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrnlse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn short_run_writes_outputs_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("run");
    let out = hrnlse(&[
        "run",
        "--preset",
        "single_soliton",
        "--set",
        "problem.t_final=0.5",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["counters"]["NHR"], 0);
    assert_eq!(summary["final_time"], 0.5);
    for name in [
        "series.csv",
        "trajectories.csv",
        "counters.json",
        "meta.toml",
        "snapshot_0.csv",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
}

#[test]
fn config_file_round_trips_through_meta() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a");
    let out = hrnlse(&[
        "run",
        "--preset",
        "uniform_baseline",
        "--set",
        "problem.t_final=0.2",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let second = dir.path().join("b");
    let out2 = hrnlse(&[
        "run",
        "--config",
        first.join("meta.toml").to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(out2.status.success(), "{}", stderr(&out2));
    assert_eq!(
        fs::read_to_string(first.join("series.csv")).unwrap(),
        fs::read_to_string(second.join("series.csv")).unwrap()
    );
}

#[test]
fn sweep_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrnlse(&[
        "sweep",
        "--preset",
        "single_soliton",
        "--set",
        "problem.t_final=0.2",
        "--rtol",
        "1.5e-2,3.75e-3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("rtol,"));
}

#[test]
fn unknown_preset_is_a_config_error() {
    let out = hrnlse(&["run", "--preset", "nope", "--out", "/tmp/unused"]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).starts_with("error kind=config "),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_override_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrnlse(&[
        "run",
        "--preset",
        "single_soliton",
        "--set",
        "refine.rtoll=1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).starts_with("error kind=config "),
        "{}",
        stderr(&out)
    );
}

#[test]
fn reference_refuses_presets_with_exact_solution() {
    let dir = tempfile::tempdir().unwrap();
    let out = hrnlse(&[
        "reference",
        "--preset",
        "single_soliton",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).starts_with("error kind=config "),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_arguments_give_usage_error() {
    let out = hrnlse(&["run", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).starts_with("error kind=usage "),
        "{}",
        stderr(&out)
    );
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = hrnlse(&[
        "run",
        "--config",
        "/nonexistent/cfg.toml",
        "--out",
        "/tmp/unused",
    ]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).starts_with("error kind=io "),
        "{}",
        stderr(&out)
    );
}
