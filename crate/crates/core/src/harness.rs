//! Experiment presets, configuration files and result output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::driver::{run, Mode, OutputConfig, RunConfig, RunCounters, RunResult, Snapshot};
use crate::error::{Error, Result};
use crate::integrator::{NewtonMode, StepControlParams};
use crate::mesh::Mesh;
use crate::mmpde::MeshSolveParams;
use crate::monitor::MonitorParams;
use crate::refinement::{interpolate, Interpolant, RefineParams};
use crate::state::{FieldPair, InitialCondition, ProblemConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    SingleSoliton,
    SingleSolitonTolprop,
    TwoSoliton,
    ThreeSoliton,
    ROnlyTable6,
    UniformBaseline,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::SingleSoliton,
        Preset::SingleSolitonTolprop,
        Preset::TwoSoliton,
        Preset::ThreeSoliton,
        Preset::ROnlyTable6,
        Preset::UniformBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::SingleSoliton => "single_soliton",
            Preset::SingleSolitonTolprop => "single_soliton_tolprop",
            Preset::TwoSoliton => "two_soliton",
            Preset::ThreeSoliton => "three_soliton",
            Preset::ROnlyTable6 => "r_only_table6",
            Preset::UniformBaseline => "uniform_baseline",
        }
    }

    pub fn from_name(name: &str) -> Result<Preset> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| {
                let known: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                Error::config(
                    "preset",
                    format!("unknown preset `{name}` (known: {})", known.join(", ")),
                )
            })
    }

    pub fn config(self) -> RunConfig {
        match self {
            Preset::SingleSoliton => single_soliton(5e-3),
            Preset::SingleSolitonTolprop => {
                let mut c = single_soliton(1e-8);
                c.control.newton = NewtonMode::Quasi;
                c.output.trajectory_stride = 50;
                c
            }
            Preset::TwoSoliton => RunConfig {
                problem: ProblemConfig {
                    q: 1.0,
                    x_l: -20.0,
                    x_r: 80.0,
                    t_final: 45.0,
                    initial_condition: InitialCondition::TwoSoliton {
                        a1: 0.2,
                        c1: 1.0,
                        x01: 0.0,
                        a2: 0.5,
                        c2: -0.2,
                        x02: 25.0,
                    },
                },
                mode: Mode::Hr {},
                refine: RefineParams {
                    rtol: 1e-2,
                    alpha: 1.2,
                    beta: 0.8,
                    ..RefineParams::default()
                },
                control: StepControlParams {
                    etol: 5e-4,
                    ..StepControlParams::default()
                },
                meshsolve: MeshSolveParams {
                    tau: 1e-2,
                    ..MeshSolveParams::default()
                },
                monitor: MonitorParams::default(),
                interpolant: Interpolant::Cubic,
                seed_cells: 50,
                gtol: None,
                output: OutputConfig {
                    snapshots: (0..=9).map(|k| 5.0 * k as f64).collect(),
                    trajectory_stride: 1,
                },
            },
            Preset::ThreeSoliton => RunConfig {
                problem: ProblemConfig {
                    q: 18.0,
                    x_l: -20.0,
                    x_r: 20.0,
                    t_final: 4.0,
                    initial_condition: InitialCondition::Sech,
                },
                mode: Mode::Hr {},
                refine: RefineParams {
                    rtol: 1e-3,
                    alpha: 3.0,
                    beta: 0.4,
                    ..RefineParams::default()
                },
                control: StepControlParams::default(),
                meshsolve: MeshSolveParams::default(),
                monitor: MonitorParams {
                    floor_override: Some(1e-3),
                    ..MonitorParams::default()
                },
                interpolant: Interpolant::Cubic,
                seed_cells: 50,
                gtol: None,
                output: OutputConfig {
                    snapshots: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.6, 2.4, 3.2, 4.0],
                    trajectory_stride: 1,
                },
            },
            Preset::ROnlyTable6 => {
                let mut c = single_soliton(1e-8);
                c.mode = Mode::ROnly { cells: 50 };
                c.problem.t_final = 1.0;
                c.output.snapshots = vec![0.0, 1.0];
                c
            }
            Preset::UniformBaseline => {
                let mut c = single_soliton(5e-3);
                c.mode = Mode::Uniform { cells: 78 };
                c
            }
        }
    }

    /// Configuration of the fine uniform run used as a reference solution,
    /// for problems without a closed form.
    pub fn reference_config(self) -> Option<RunConfig> {
        let mut c = self.config();
        if c.problem.exact_soliton().is_some() {
            return None;
        }
        c.mode = Mode::Uniform { cells: 2000 };
        c.control.etol = 1e-6;
        c.output.trajectory_stride = 0;
        Some(c)
    }
}

fn single_soliton(etol: f64) -> RunConfig {
    RunConfig {
        problem: ProblemConfig {
            q: 1.0,
            x_l: -30.0,
            x_r: 70.0,
            t_final: 30.0,
            initial_condition: InitialCondition::SingleSoliton {
                a: 1.0,
                c: 1.0,
                x0: 0.0,
            },
        },
        mode: Mode::Hr {},
        refine: RefineParams {
            rtol: 1.5e-2,
            alpha: 1.4,
            beta: 0.8,
            ..RefineParams::default()
        },
        control: StepControlParams {
            etol,
            ..StepControlParams::default()
        },
        meshsolve: MeshSolveParams {
            tau: 1e-3,
            ..MeshSolveParams::default()
        },
        monitor: MonitorParams::default(),
        interpolant: Interpolant::Cubic,
        seed_cells: 50,
        gtol: None,
        output: OutputConfig {
            snapshots: vec![0.0, 10.0, 20.0, 30.0],
            trajectory_stride: 1,
        },
    }
}

/// Parses and validates a TOML run configuration.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        toml::from_str(text).map_err(|e| Error::config("<config>", e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text)
}

pub fn config_to_toml(config: &RunConfig) -> String {
    toml::to_string(config).expect("run configs always serialise")
}

/// Applies `key.path=value` overrides. Values are parsed as TOML and fall
/// back to bare strings.
pub fn apply_overrides(config: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    let mut tree = toml::Value::try_from(config).expect("run configs always serialise");
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| Error::config(item.clone(), "expected key=value"))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts
            .pop()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::config(key, "empty key"))?;
        let mut node = &mut tree;
        for part in parts {
            node = node
                .get_mut(part)
                .filter(|v| v.is_table())
                .ok_or_else(|| Error::config(key, format!("no section `{part}`")))?;
        }
        node.as_table_mut()
            .expect("walked only through tables")
            .insert(leaf.to_string(), value);
    }
    let text = toml::to_string(&tree).expect("value tree serialises");
    parse_config_str(&text).map_err(|e| match e {
        Error::Config { reason, .. } => Error::config(overrides.join(" "), reason),
        other => other,
    })
}

fn parse_value(raw: &str) -> toml::Value {
    let probe = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&probe) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn snapshot_file_name(t: f64) -> String {
    format!("snapshot_{t}.csv")
}

/// Summary written to `counters.json`.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub preset: Option<String>,
    pub counters: RunCounters,
    pub initial_cells: usize,
    pub meshtol: f64,
    pub meshbal: f64,
    pub final_time: f64,
    pub mean_charge: f64,
    pub mean_energy: f64,
    pub final_l2_error: Option<f64>,
}

impl RunSummary {
    pub fn new(result: &RunResult, preset: Option<&str>) -> Self {
        let (mean_charge, mean_energy) = result.mean_invariants();
        RunSummary {
            preset: preset.map(str::to_string),
            counters: result.counters.clone(),
            initial_cells: result.initial_cells,
            meshtol: result.meshtol,
            meshbal: result.meshbal,
            final_time: result.final_state.t,
            mean_charge,
            mean_energy,
            final_l2_error: result.final_l2_error(),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `series.csv`, `trajectories.csv`, one `snapshot_<t>.csv` per
/// snapshot, `counters.json` and `meta.toml` into `outdir`.
pub fn emit_results(
    result: &RunResult,
    preset: Option<&str>,
    outdir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let mut written = Vec::new();

    let mut series = String::from("t,dt,cells,eta,charge,energy,l2_error,refined\n");
    for r in &result.series {
        let l2 = r.l2_error.map(fmt17).unwrap_or_default();
        let _ = writeln!(
            series,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.t),
            fmt17(r.dt),
            r.cells,
            fmt17(r.eta),
            fmt17(r.charge),
            fmt17(r.energy),
            l2,
            u8::from(r.refined)
        );
    }
    let path = outdir.join("series.csv");
    write_file(&path, &series)?;
    written.push(path);

    // Rows are ragged when N changes: t, N, then the N+1 node positions.
    let mut traj = String::from("t,cells,nodes...\n");
    for (t, nodes) in &result.trajectories {
        let _ = write!(traj, "{},{}", fmt17(*t), nodes.len() - 1);
        for x in nodes {
            let _ = write!(traj, ",{}", fmt17(*x));
        }
        traj.push('\n');
    }
    let path = outdir.join("trajectories.csv");
    write_file(&path, &traj)?;
    written.push(path);

    for snap in &result.snapshots {
        let mut text = String::from("x,modulus,u,v\n");
        for (i, x) in snap.nodes.iter().enumerate() {
            let (u, v) = (snap.fields.u[i], snap.fields.v[i]);
            let _ = writeln!(
                text,
                "{},{},{},{}",
                fmt17(*x),
                fmt17(u.hypot(v)),
                fmt17(u),
                fmt17(v)
            );
        }
        let path = outdir.join(snapshot_file_name(snap.t));
        write_file(&path, &text)?;
        written.push(path);
    }

    let summary =
        serde_json::to_string_pretty(&RunSummary::new(result, preset)).expect("summary serialises");
    let path = outdir.join("counters.json");
    write_file(&path, &(summary + "\n"))?;
    written.push(path);

    let path = outdir.join("meta.toml");
    write_file(&path, &config_to_toml(&result.config))?;
    written.push(path);
    Ok(written)
}

/// Reads the snapshots listed in a config's schedule back from `dir`.
pub fn load_snapshots(dir: &Path, times: &[f64]) -> Result<Vec<Snapshot>> {
    times
        .iter()
        .map(|&t| {
            let path = dir.join(snapshot_file_name(t));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let (mut nodes, mut u, mut v) = (Vec::new(), Vec::new(), Vec::new());
            for (line_no, line) in text.lines().enumerate().skip(1) {
                let cols: Vec<f64> = line
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| {
                        Error::config(
                            path.display().to_string(),
                            format!("bad number on line {}", line_no + 1),
                        )
                    })?;
                if cols.len() != 4 {
                    return Err(Error::config(
                        path.display().to_string(),
                        format!("expected 4 columns on line {}", line_no + 1),
                    ));
                }
                nodes.push(cols[0]);
                u.push(cols[2]);
                v.push(cols[3]);
            }
            Ok(Snapshot {
                t,
                nodes,
                fields: FieldPair::new(u, v)?,
            })
        })
        .collect()
}

/// Runs (or loads from `cache_dir`) the reference solution of a preset.
pub fn reference_snapshots(preset: Preset, cache_dir: &Path) -> Result<Vec<Snapshot>> {
    let config = preset.reference_config().ok_or_else(|| {
        Error::config(
            "preset",
            format!("`{}` has an exact solution", preset.name()),
        )
    })?;
    let meta = cache_dir.join("meta.toml");
    if let Ok(cached) = load_config(&meta) {
        if cached == config {
            return load_snapshots(cache_dir, &config.output.snapshots);
        }
    }
    let result = run(config)?;
    emit_results(&result, Some(preset.name()), cache_dir)?;
    Ok(result.snapshots)
}

/// Largest nodal difference of `|psi|` against a reference snapshot,
/// interpolated onto the nodes of `snap`.
pub fn max_modulus_error(snap: &Snapshot, reference: &Snapshot) -> Result<f64> {
    let ref_mesh = Mesh::new(reference.nodes.clone())?;
    let ref_mod = reference.fields.modulus();
    let at_nodes = interpolate(&ref_mesh, &ref_mod, &snap.nodes, Interpolant::Cubic);
    Ok(snap
        .fields
        .modulus()
        .iter()
        .zip(&at_nodes)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Pairs each snapshot of `result` with the reference at the same time.
pub fn compare_to_reference(result: &RunResult, reference: &[Snapshot]) -> Result<Vec<(f64, f64)>> {
    result
        .snapshots
        .iter()
        .map(|snap| {
            let r = reference.iter().find(|r| r.t == snap.t).ok_or_else(|| {
                Error::config("snapshots", format!("no reference at t = {}", snap.t))
            })?;
            Ok((snap.t, max_modulus_error(snap, r)?))
        })
        .collect()
}

#[derive(Debug)]
pub struct SweepRow {
    pub rtol: f64,
    pub outcome: Result<(usize, f64)>,
}

/// Runs `base` once per RTOL in parallel and tabulates `N^0` and the final
/// L2 error. Rows keep the input order; failures stay in their row.
pub fn tolerance_sweep(base: &RunConfig, rtols: &[f64]) -> Vec<SweepRow> {
    rtols
        .par_iter()
        .map(|&rtol| {
            let mut config = base.clone();
            config.refine.rtol = rtol;
            config.output.trajectory_stride = 0;
            let outcome = if config.problem.exact_soliton().is_none() {
                Err(Error::config(
                    "problem.initial_condition",
                    "sweep needs an exact solution",
                ))
            } else {
                run(config).map(|r| {
                    (
                        r.initial_cells,
                        r.final_l2_error().expect("exact solution known"),
                    )
                })
            };
            SweepRow { rtol, outcome }
        })
        .collect()
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let mut out = String::from("rtol,initial_cells,l2_error,error\n");
    for row in rows {
        match &row.outcome {
            Ok((n0, err)) => {
                let _ = writeln!(out, "{},{},{},", fmt17(row.rtol), n0, fmt17(*err));
            }
            Err(e) => {
                let _ = writeln!(out, "{},,,{}", fmt17(row.rtol), e.kind());
            }
        }
    }
    out
}
