use hrnlse::driver::Solver;
use hrnlse::harness::{apply_overrides, Preset};
use hrnlse::integrator::{sdirk2_step, OdeSystem};
use hrnlse::linalg::BandMatrix;
use hrnlse::physics::{add_nlse_jacobian, nlse_rhs_interleaved, JACOBIAN_BANDWIDTH};
use hrnlse::{run, InitialCondition, Mesh, Mode, RunConfig, RunCounters};

fn preset(p: Preset, overrides: &[&str]) -> RunConfig {
    let owned: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    apply_overrides(&p.config(), &owned).unwrap()
}

/// Plain method of lines on a fixed mesh, independent of the moving-mesh system.
struct StaticNlse {
    x: Vec<f64>,
    zero: Vec<f64>,
    q: f64,
}

impl OdeSystem for StaticNlse {
    fn dim(&self) -> usize {
        2 * self.x.len()
    }
    fn bandwidth(&self) -> (usize, usize) {
        (JACOBIAN_BANDWIDTH, JACOBIAN_BANDWIDTH)
    }
    fn rhs(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        nlse_rhs_interleaved(&self.x, &self.zero, self.q, y, out);
    }
    fn add_jacobian(&self, _t: f64, y: &[f64], scale: f64, jac: &mut BandMatrix) {
        add_nlse_jacobian(&self.x, &self.zero, self.q, y, scale, jac);
    }
}

#[test]
fn zero_field_is_stationary_and_steps_double() {
    let mut config = preset(Preset::SingleSoliton, &["problem.t_final=2"]);
    config.problem.initial_condition = InitialCondition::Zero;
    config.mode = Mode::ROnly { cells: 40 };
    let result = run(config).unwrap();
    let uniform = Mesh::uniform(-30.0, 70.0, 40).unwrap();
    for (a, b) in result.final_state.mesh.nodes().iter().zip(uniform.nodes()) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert!(result.final_state.fields.u.iter().all(|&u| u == 0.0));
    assert!(result.final_state.fields.v.iter().all(|&v| v == 0.0));
    let steps: Vec<f64> = result.series[1..].iter().map(|r| r.dt).collect();
    assert_eq!(steps[0], 1e-4);
    // The last step is shortened to land on T.
    for pair in steps[..steps.len() - 1].windows(2) {
        assert_eq!(pair[1], 2.0 * pair[0]);
    }
    assert_eq!(result.final_state.t, 2.0);
    assert_eq!(result.counters.etf, 0);
}

#[test]
fn zero_final_time_returns_initial_state() {
    let result = run(preset(Preset::SingleSoliton, &["problem.t_final=0"])).unwrap();
    assert_eq!(result.counters.nstp, 0);
    assert_eq!(result.series.len(), 1);
    assert_eq!(result.final_state.t, 0.0);
    assert_eq!(result.snapshots.len(), 1);
    assert_eq!(result.snapshots[0].t, 0.0);
    assert_eq!(result.final_state.mesh.cells(), result.initial_cells);
}

#[test]
fn uniform_mode_uses_requested_mesh_without_iteration() {
    let config = preset(
        Preset::UniformBaseline,
        &["mode.cells=400", "problem.t_final=0"],
    );
    let (_, state) = Solver::initialise(config).unwrap();
    let uniform = Mesh::uniform(-30.0, 70.0, 400).unwrap();
    assert_eq!(state.mesh.node_count(), 401);
    assert_eq!(state.mesh.nodes(), uniform.nodes());
}

#[test]
fn runs_are_deterministic() {
    let config = preset(Preset::TwoSoliton, &["problem.t_final=3"]);
    let a = run(config.clone()).unwrap();
    let b = run(config).unwrap();
    assert_eq!(a.counters, b.counters);
    assert_eq!(format!("{:?}", a.series), format!("{:?}", b.series));
    assert_eq!(a.final_state.fields, b.final_state.fields);
}

#[test]
fn time_is_monotone_and_lands_on_snapshots() {
    let config = preset(
        Preset::SingleSoliton,
        &[
            "problem.t_final=2.5",
            "output.snapshots=[0.0, 0.7, 1.3, 2.5]",
        ],
    );
    let result = run(config).unwrap();
    for pair in result.series.windows(2) {
        assert!(pair[1].t > pair[0].t);
    }
    assert_eq!(result.series.last().unwrap().t, 2.5);
    let times: Vec<f64> = result.snapshots.iter().map(|s| s.t).collect();
    assert_eq!(times, vec![0.0, 0.7, 1.3, 2.5]);
    for t in [0.7, 1.3] {
        assert!(
            result.series.iter().any(|r| r.t == t),
            "no step ends at {t}"
        );
    }
}

fn check_counters(c: &RunCounters, series_len: usize) {
    assert!(c.nmin <= c.nmax);
    assert_eq!(c.nstp + 1, series_len);
}

#[test]
fn counters_are_consistent() {
    let full = run(preset(Preset::SingleSoliton, &["problem.t_final=3"])).unwrap();
    check_counters(&full.counters, full.series.len());
    assert_eq!(full.counters.jacs, full.counters.bs);
    assert_eq!(full.counters.nhr, 0);

    let quasi = run(preset(
        Preset::SingleSoliton,
        &["problem.t_final=3", "control.newton=\"quasi\""],
    ))
    .unwrap();
    check_counters(&quasi.counters, quasi.series.len());
    assert!(quasi.counters.bs > quasi.counters.jacs);
}

#[test]
fn uniform_mode_matches_static_method_of_lines() {
    let config = preset(Preset::UniformBaseline, &["problem.t_final=0.5"]);
    let ctrl = config.control;
    let q = config.problem.q;
    let result = run(config).unwrap();
    assert_eq!(result.counters.etf, 0);
    assert_eq!(result.counters.ctf, 0);

    let mesh = Mesh::uniform(-30.0, 70.0, 78).unwrap();
    let n = mesh.node_count();
    let system = StaticNlse {
        x: mesh.nodes().to_vec(),
        zero: vec![0.0; n],
        q,
    };
    let mut w = hrnlse::physics::sample_initial(&result.config.problem, &mesh).interleave();
    let clamp = |w: &mut Vec<f64>| {
        for i in [0, 1, 2 * n - 2, 2 * n - 1] {
            w[i] = 0.0;
        }
    };
    clamp(&mut w);
    let mut guess: Option<Vec<f64>> = None;
    let mut counters = RunCounters::default();
    for row in &result.series[1..] {
        let t = row.t - row.dt;
        let step = sdirk2_step(
            &system,
            t,
            &w,
            row.dt,
            &ctrl,
            guess.as_deref(),
            &mut None,
            &mut counters,
        )
        .unwrap();
        w = step.w;
        clamp(&mut w);
        guess = Some(step.k1);
    }
    let driven = result.final_state.fields.interleave();
    let diff = w
        .iter()
        .zip(&driven)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff <= 1e-13, "max difference {diff:e}");
}

#[test]
fn eta_stays_in_band_unless_refined() {
    let config = preset(Preset::TwoSoliton, &["problem.t_final=20"]);
    let (lo, hi) = (
        config.refine.beta * config.refine.rtol,
        config.refine.alpha * config.refine.rtol,
    );
    let result = run(config).unwrap();
    assert!(result.counters.nhr > 0);
    for row in &result.series {
        assert!(row.refined || (row.eta > lo && row.eta < hi), "{row:?}");
    }
}

#[test]
fn r_only_keeps_node_count() {
    let result = run(preset(Preset::ROnlyTable6, &["problem.t_final=0.3"])).unwrap();
    assert_eq!(result.counters.nhr, 0);
    assert_eq!((result.counters.nmin, result.counters.nmax), (50, 50));
    assert!(result.series.iter().all(|r| r.cells == 50));
}
