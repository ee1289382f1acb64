use std::fs;

use hrnlse::harness::{
    apply_overrides, emit_results, load_config, load_snapshots, sweep_table, tolerance_sweep,
    Preset,
};
use hrnlse::{run, Error, RunConfig};

fn preset(p: Preset, overrides: &[&str]) -> RunConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    apply_overrides(&p.config(), &owned).unwrap()
}

#[test]
fn zero_time_run_emits_one_row_and_one_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(preset(Preset::SingleSoliton, &["problem.t_final=0"])).unwrap();
    emit_results(&result, Some("single_soliton"), dir.path()).unwrap();
    let series = fs::read_to_string(dir.path().join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 2, "header plus one row");
    let snaps: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().starts_with("snapshot_"))
        .collect();
    assert_eq!(snaps.len(), 1);
}

#[test]
fn single_soliton_summary_reports_no_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(Preset::SingleSoliton.config()).unwrap();
    emit_results(&result, Some("single_soliton"), dir.path()).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("counters.json")).unwrap())
            .unwrap();
    assert_eq!(summary["counters"]["NHR"], 0);
    assert_eq!(summary["preset"], "single_soliton");
}

#[test]
fn meta_record_reproduces_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = preset(
        Preset::TwoSoliton,
        &["problem.t_final=0.5", "refine.rtol=3.75e-3"],
    );
    let result = run(config.clone()).unwrap();
    emit_results(&result, None, dir.path()).unwrap();
    assert_eq!(load_config(&dir.path().join("meta.toml")).unwrap(), config);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let config = preset(Preset::TwoSoliton, &["problem.t_final=2"]);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        emit_results(&run(config.clone()).unwrap(), Some("two_soliton"), d.path()).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for name in names {
        let a = fs::read(dirs[0].path().join(&name)).unwrap();
        let b = fs::read(dirs[1].path().join(&name)).unwrap();
        assert!(a == b, "{name:?} differs");
    }
}

#[test]
fn snapshots_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let result = run(preset(Preset::SingleSoliton, &["problem.t_final=10"])).unwrap();
    emit_results(&result, None, dir.path()).unwrap();
    let loaded = load_snapshots(dir.path(), &[0.0, 10.0]).unwrap();
    assert_eq!(loaded.len(), 2);
    for (a, b) in loaded.iter().zip(&result.snapshots) {
        assert_eq!(a.t, b.t);
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.fields, b.fields);
    }
}

#[test]
fn single_entry_sweep_equals_plain_run() {
    let config = preset(Preset::SingleSoliton, &["problem.t_final=2"]);
    let rows = tolerance_sweep(&config, &[config.refine.rtol]);
    assert_eq!(rows.len(), 1);
    let plain = run(config).unwrap();
    let (n0, err) = rows[0].outcome.as_ref().unwrap();
    assert_eq!(*n0, plain.initial_cells);
    assert_eq!(*err, plain.final_l2_error().unwrap());
}

#[test]
fn sweep_rows_keep_input_order_and_failures() {
    let mut config = preset(Preset::SingleSoliton, &["problem.t_final=0.5"]);
    config.refine.rtol = 1.5e-2;
    let rows = tolerance_sweep(&config, &[1.5e-2, 3.75e-3]);
    assert_eq!(rows[0].rtol, 1.5e-2);
    assert_eq!(rows[1].rtol, 3.75e-3);
    let n0: Vec<usize> = rows.iter().map(|r| r.outcome.as_ref().unwrap().0).collect();
    assert!(n0[1] > n0[0]);

    let two = preset(Preset::TwoSoliton, &["problem.t_final=0.5"]);
    let failed = tolerance_sweep(&two, &[1e-2]);
    assert!(matches!(failed[0].outcome, Err(Error::Config { .. })));
    assert!(sweep_table(&failed)
        .lines()
        .nth(1)
        .unwrap()
        .ends_with(",config"));
}

#[test]
fn two_soliton_node_count_returns_near_start() {
    let result = run(Preset::TwoSoliton.config()).unwrap();
    let first = result.series.first().unwrap().cells as f64;
    let last = result.series.last().unwrap().cells as f64;
    assert!(
        (last / first - 1.0).abs() <= 0.25,
        "N from {first} to {last}"
    );
    assert!(result.counters.nmax as f64 > 1.2 * first);
}
