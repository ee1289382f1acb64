//! The coupled hr-adaptive time loop: mesh/solution sweeps, acceptance
//! tests, step-size selection, node-count control and run statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::{
    propose_dt_mesh, propose_dt_solution, sdirk2_step, solution_error, MovingMeshNlse, NewtonMode,
    StepControlParams,
};
use crate::linalg::BandLu;
use crate::mesh::Mesh;
use crate::mmpde::{equidistribute, solve_mesh_step, MeshSolveParams, DEBOOR_MAX_ITERATIONS};
use crate::monitor::{assemble_monitor, eta, MonitorParams, MonitorProfile};
use crate::physics::{
    conserved_quantities, exact_single_soliton_modulus, l2_error, sample_initial,
};
use crate::refinement::{
    needs_refinement, predict_node_count, regrid_and_transfer, Decision, Interpolant, RefineParams,
};
use crate::state::{FieldPair, ProblemConfig, State};

/// Performance statistics of a run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounters {
    /// Number of h-refinements (changes of N).
    #[serde(rename = "NHR")]
    pub nhr: usize,
    /// Largest number of cells used.
    #[serde(rename = "NMAX")]
    pub nmax: usize,
    /// Smallest number of cells used.
    #[serde(rename = "NMIN")]
    pub nmin: usize,
    /// Accepted time steps.
    #[serde(rename = "NSTP")]
    pub nstp: usize,
    /// Jacobian evaluations (each followed by an LU factorisation).
    #[serde(rename = "JACS")]
    pub jacs: usize,
    /// Triangular back-solves.
    #[serde(rename = "BS")]
    pub bs: usize,
    /// Step halvings after a failed ERR or mesherr test.
    #[serde(rename = "ETF")]
    pub etf: usize,
    /// Newton convergence failures.
    #[serde(rename = "CTF")]
    pub ctf: usize,
    /// Step halvings after the mesh tangled.
    pub tangles: usize,
    /// Equidistributions that hit the iteration cap.
    pub deboor_unconverged: usize,
}

impl RunCounters {
    fn observe_cells(&mut self, n: usize) {
        if self.nmax == 0 && self.nmin == 0 {
            self.nmax = n;
            self.nmin = n;
        } else {
            self.nmax = self.nmax.max(n);
            self.nmin = self.nmin.min(n);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Mode {
    /// Moving mesh with node-count control.
    Hr {},
    /// Moving mesh with a fixed number of cells.
    ROnly { cells: usize },
    /// Frozen uniform mesh.
    Uniform { cells: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Times at which full solution snapshots are taken (hit exactly).
    pub snapshots: Vec<f64>,
    /// Record node positions every this many accepted steps (0 disables).
    pub trajectory_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            snapshots: Vec::new(),
            trajectory_stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub mode: Mode,
    #[serde(default)]
    pub refine: RefineParams,
    #[serde(default)]
    pub control: StepControlParams,
    #[serde(default)]
    pub meshsolve: MeshSolveParams,
    #[serde(default)]
    pub monitor: MonitorParams,
    #[serde(default)]
    pub interpolant: Interpolant,
    /// Starting N of the initial node-count search.
    #[serde(default = "default_seed_cells")]
    pub seed_cells: usize,
    /// de Boor tolerance; `None` resolves to `1e-6 (x_r - x_l)`.
    #[serde(default)]
    pub gtol: Option<f64>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_seed_cells() -> usize {
    50
}

/// Outer iterations allowed when searching for `N^0`.
pub const MAX_INIT_ITERATIONS: usize = 25;
/// Consecutive step halvings before giving up.
pub const MAX_HALVINGS: usize = 40;
pub const MIN_DT: f64 = 1e-12;

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.refine.validate()?;
        self.control.validate()?;
        self.meshsolve.validate()?;
        match self.mode {
            Mode::ROnly { cells } | Mode::Uniform { cells } if cells < 2 => {
                return Err(Error::config("mode.cells", "need at least 2 cells"));
            }
            _ => {}
        }
        if self.seed_cells < 2 {
            return Err(Error::config("seed_cells", "need at least 2 cells"));
        }
        if let Some(phi) = self.monitor.floor_override {
            if !(phi > 0.0) {
                return Err(Error::config("monitor.floor_override", "must be positive"));
            }
        }
        if let Some(gtol) = self.gtol {
            if !(gtol > 0.0) {
                return Err(Error::config("gtol", "must be positive"));
            }
        }
        if self.output.snapshots.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::config(
                "output.snapshots",
                "times must be non-negative",
            ));
        }
        Ok(())
    }

    pub fn resolved_gtol(&self) -> f64 {
        self.gtol
            .unwrap_or(1e-6 * (self.problem.x_r - self.problem.x_l))
    }

    fn moving(&self) -> bool {
        !matches!(self.mode, Mode::Uniform { .. })
    }
}

/// One row of the per-step time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    /// Step size that produced this state (0 for the initial state).
    pub dt: f64,
    pub cells: usize,
    /// `eta` of the accepted state, before any regridding.
    pub eta: f64,
    pub charge: f64,
    pub energy: f64,
    /// L2 error of the modulus when an exact solution is known.
    pub l2_error: Option<f64>,
    /// Whether the node-count control regridded after this step.
    pub refined: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub nodes: Vec<f64>,
    pub fields: FieldPair,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub config: RunConfig,
    /// Number of cells selected at `t = 0`.
    pub initial_cells: usize,
    pub meshtol: f64,
    pub meshbal: f64,
    pub final_state: State,
    pub counters: RunCounters,
    pub series: Vec<SeriesRow>,
    /// `(t, node positions)` every `trajectory_stride` accepted steps.
    pub trajectories: Vec<(f64, Vec<f64>)>,
    pub snapshots: Vec<Snapshot>,
}

impl RunResult {
    /// Mean of `Q_h` and `E_h` over all recorded states.
    pub fn mean_invariants(&self) -> (f64, f64) {
        let n = self.series.len() as f64;
        let q = self.series.iter().map(|r| r.charge).sum::<f64>() / n;
        let e = self.series.iter().map(|r| r.energy).sum::<f64>() / n;
        (q, e)
    }

    pub fn final_l2_error(&self) -> Option<f64> {
        self.series.last().and_then(|r| r.l2_error)
    }
}

/// What happened to one accepted step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub dt_used: f64,
    pub err: f64,
    pub mesherr: f64,
    pub eta: f64,
    pub decision: Decision,
    pub halvings: usize,
}

/// Stateful driver for one run.
pub struct Solver {
    config: RunConfig,
    meshtol: f64,
    meshbal: f64,
    counters: RunCounters,
    /// Last first-stage derivative, used to warm-start Newton.
    last_k1: Option<Vec<f64>>,
    /// Stage factorisation; in quasi-Newton mode it lives for one attempt,
    /// otherwise only its storage is recycled.
    lu: Option<BandLu>,
}

fn monitor_on(config: &RunConfig, mesh: &Mesh) -> Vec<f64> {
    let fields = sample_initial(&config.problem, mesh);
    assemble_monitor(&fields, mesh, &config.monitor).mesh_weights()
}

impl Solver {
    /// Validates the config and computes the initial state (mesh, `N^0`, fields).
    pub fn initialise(config: RunConfig) -> Result<(Solver, State)> {
        config.validate()?;
        let problem = &config.problem;
        let gtol = config.resolved_gtol();
        let mut counters = RunCounters::default();
        let (x_l, x_r) = (problem.x_l, problem.x_r);

        let mesh = match config.mode {
            Mode::Uniform { cells } => Mesh::uniform(x_l, x_r, cells)?,
            Mode::ROnly { cells } => {
                let start = Mesh::uniform(x_l, x_r, cells)?;
                let eq = equidistribute(&start, cells, gtol, DEBOOR_MAX_ITERATIONS, |m| {
                    monitor_on(&config, m)
                })?;
                if !eq.converged {
                    counters.deboor_unconverged += 1;
                }
                eq.mesh
            }
            Mode::Hr {} => {
                let mut n = config.seed_cells;
                let mut mesh = Mesh::uniform(x_l, x_r, n)?;
                let mut found = None;
                let mut last_eta = f64::NAN;
                for _ in 0..MAX_INIT_ITERATIONS {
                    let eq = equidistribute(&mesh, n, gtol, DEBOOR_MAX_ITERATIONS, |m| {
                        monitor_on(&config, m)
                    })?;
                    if !eq.converged {
                        counters.deboor_unconverged += 1;
                    }
                    mesh = eq.mesh;
                    let fields = sample_initial(problem, &mesh);
                    let profile = assemble_monitor(&fields, &mesh, &config.monitor);
                    last_eta = eta(&profile, &mesh);
                    match needs_refinement(last_eta, &config.refine) {
                        Decision::Keep => {
                            found = Some(mesh.clone());
                            break;
                        }
                        dir => n = predict_node_count(n, last_eta, &config.refine, dir).max(2),
                    }
                }
                found.ok_or(Error::InitialisationFailed {
                    iterations: MAX_INIT_ITERATIONS,
                    n: mesh.cells(),
                    eta: last_eta,
                })?
            }
        };

        let fields = sample_initial(problem, &mesh);
        counters.observe_cells(mesh.cells());
        let (meshtol, meshbal) = config.control.mesh_tolerances(x_r - x_l, mesh.cells());
        let state = State {
            t: 0.0,
            dt: config.control.dt0,
            mesh,
            fields,
        };
        let solver = Solver {
            config,
            meshtol,
            meshbal,
            counters,
            last_k1: None,
            lu: None,
        };
        Ok((solver, state))
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn counters(&self) -> &RunCounters {
        &self.counters
    }

    pub fn mesh_tolerances(&self) -> (f64, f64) {
        (self.meshtol, self.meshbal)
    }

    pub fn profile(&self, state: &State) -> MonitorProfile {
        assemble_monitor(&state.fields, &state.mesh, &self.config.monitor)
    }

    /// Coupled sweeps over one step of size `dt`. Returns the final mesh and
    /// fields with the ERR and mesherr indicators.
    fn attempt(&mut self, state: &State, dt: f64) -> Result<(Mesh, FieldPair, f64, f64)> {
        let cfg = &self.config;
        let q = cfg.problem.q;
        let mesh_old = &state.mesh;
        let w_old = state.fields.interleave();
        let moving = cfg.moving();
        let sweeps = if moving { cfg.meshsolve.sweeps } else { 1 };

        let mut mesh_iter = mesh_old.clone();
        let mut mesh_prev = mesh_old.clone();
        let mut fields_iter = state.fields.clone();
        let mut result = None;
        if cfg.control.newton == NewtonMode::Quasi {
            self.lu = None;
        }
        for _ in 0..sweeps {
            if moving {
                let profile = assemble_monitor(&fields_iter, &mesh_iter, &cfg.monitor);
                let update = solve_mesh_step(
                    mesh_old,
                    &mesh_iter,
                    &profile.mesh_weights(),
                    dt,
                    &cfg.meshsolve,
                )?;
                mesh_prev = std::mem::replace(&mut mesh_iter, update.mesh);
            }
            let system = MovingMeshNlse::new(mesh_old, &mesh_iter, state.t, dt, q);
            let step = sdirk2_step(
                &system,
                state.t,
                &w_old,
                dt,
                &cfg.control,
                self.last_k1.as_deref(),
                &mut self.lu,
                &mut self.counters,
            )?;
            fields_iter = FieldPair::from_interleaved(&step.w);
            self.last_k1 = Some(step.k1.clone());
            result = Some(step);
        }
        let step = result.expect("at least one sweep");
        let err = solution_error(&step.w, &step.w_embedded, &mesh_iter);
        let mesherr = if moving {
            mesh_iter.max_displacement(&mesh_prev)
        } else {
            0.0
        };
        fields_iter.zero_boundaries();
        Ok((mesh_iter, fields_iter, err, mesherr))
    }

    /// Advances `state` by one accepted step that does not pass `t_stop`,
    /// then applies node-count control (hr mode).
    pub fn advance_step(&mut self, state: &mut State, t_stop: f64) -> Result<StepReport> {
        let gap = t_stop - state.t;
        assert!(gap > 0.0, "advance_step called at or past the stop time");
        let requested = state.dt;
        let mut dt = requested;
        let mut landing = false;
        if dt >= gap * (1.0 - 1e-9) {
            dt = gap;
            landing = true;
        }
        let ctrl = self.config.control;
        let mut halvings = 0;
        let (mesh, fields, err, mesherr) = loop {
            match self.attempt(state, dt) {
                Ok((mesh, fields, err, mesherr)) if err < ctrl.etol && mesherr < self.meshtol => {
                    break (mesh, fields, err, mesherr);
                }
                Ok(_) => self.counters.etf += 1,
                Err(Error::MeshTangled { .. }) => self.counters.tangles += 1,
                Err(Error::NewtonDiverged { .. }) | Err(Error::SingularJacobian { .. }) => {
                    self.last_k1 = None;
                }
                Err(e) => return Err(e),
            }
            halvings += 1;
            dt *= 0.5;
            landing = false;
            if halvings > MAX_HALVINGS || dt < MIN_DT {
                return Err(Error::StepsizeUnderflow {
                    t: state.t,
                    dt,
                    halvings,
                });
            }
        };

        let factor = (propose_dt_solution(dt, err, &ctrl) / dt)
            .min(propose_dt_mesh(dt, mesherr, self.meshbal, &ctrl) / dt);
        let next_dt = if landing && dt < requested {
            requested * factor.min(1.0)
        } else {
            dt * factor
        };
        state.t = if landing { t_stop } else { state.t + dt };
        state.dt = next_dt;
        state.mesh = mesh;
        state.fields = fields;
        self.counters.nstp += 1;

        let profile = self.profile(state);
        let eta_now = eta(&profile, &state.mesh);
        let mut decision = Decision::Keep;
        if matches!(self.config.mode, Mode::Hr {}) {
            decision = needs_refinement(eta_now, &self.config.refine);
            if decision != Decision::Keep {
                let n = state.mesh.cells();
                let n_new = predict_node_count(n, eta_now, &self.config.refine, decision).max(2);
                *state = regrid_and_transfer(state, &profile, n_new, self.config.interpolant)?;
                if n_new != n {
                    self.counters.nhr += 1;
                }
                self.last_k1 = None;
                self.counters.observe_cells(n_new);
            }
        }
        Ok(StepReport {
            dt_used: dt,
            err,
            mesherr,
            eta: eta_now,
            decision,
            halvings,
        })
    }

    fn series_row(&self, state: &State, dt: f64, eta_value: f64, refined: bool) -> SeriesRow {
        let problem = &self.config.problem;
        let (charge, energy) = conserved_quantities(&state.fields, &state.mesh, problem.q);
        let l2 = problem.exact_soliton().map(|p| {
            l2_error(&state.fields, &state.mesh, |x| {
                exact_single_soliton_modulus(&p, problem.q, x, state.t)
            })
        });
        SeriesRow {
            t: state.t,
            dt,
            cells: state.mesh.cells(),
            eta: eta_value,
            charge,
            energy,
            l2_error: l2,
            refined,
        }
    }
}

/// Integrates the configured problem to its final time.
pub fn run(config: RunConfig) -> Result<RunResult> {
    let (mut solver, mut state) = Solver::initialise(config)?;
    let t_final = solver.config.problem.t_final;
    let mut snapshot_times: Vec<f64> = solver
        .config
        .output
        .snapshots
        .iter()
        .copied()
        .filter(|&t| t <= t_final)
        .collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let stride = solver.config.output.trajectory_stride;

    let mut series = Vec::new();
    let mut trajectories = Vec::new();
    let mut snapshots = Vec::new();
    let mut pending = snapshot_times.iter().copied().peekable();

    let eta0 = eta(&solver.profile(&state), &state.mesh);
    series.push(solver.series_row(&state, 0.0, eta0, false));
    if stride > 0 {
        trajectories.push((state.t, state.mesh.nodes().to_vec()));
    }
    let take_snapshot = |state: &State| Snapshot {
        t: state.t,
        nodes: state.mesh.nodes().to_vec(),
        fields: state.fields.clone(),
    };
    while pending.peek().is_some_and(|&t| t <= state.t) {
        pending.next();
        snapshots.push(take_snapshot(&state));
    }

    while state.t < t_final {
        let t_stop = pending.peek().copied().unwrap_or(t_final).min(t_final);
        // Snapshot rows are taken from the accepted state before any regrid.
        let before_regrid_snapshot;
        let report = {
            let landed_on_snapshot = pending.peek().is_some_and(|&t| t == t_stop);
            let mut probe = state.clone();
            let report = solver.advance_step(&mut probe, t_stop)?;
            before_regrid_snapshot = landed_on_snapshot && probe.t == t_stop;
            state = probe;
            report
        };
        let refined = report.decision != Decision::Keep;
        series.push(solver.series_row(&state, report.dt_used, report.eta, refined));
        if stride > 0 && solver.counters.nstp % stride == 0 {
            trajectories.push((state.t, state.mesh.nodes().to_vec()));
        }
        if before_regrid_snapshot {
            pending.next();
            snapshots.push(take_snapshot(&state));
        }
    }

    let initial_cells = series[0].cells;
    Ok(RunResult {
        meshtol: solver.meshtol,
        meshbal: solver.meshbal,
        counters: solver.counters.clone(),
        config: solver.config,
        initial_cells,
        final_state: state,
        series,
        trajectories,
        snapshots,
    })
}
