//! Two-stage SDIRK time stepping with Newton solves for the stages, the
//! embedded first-order error estimate and the step-size controllers.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::driver::RunCounters;
use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::mesh::Mesh;
use crate::physics::{add_nlse_jacobian, nlse_rhs_interleaved, JACOBIAN_BANDWIDTH};

/// Butcher array of the L-stable two-stage SDIRK method of order 2:
///
/// ```text
///  g  | g      0
///  1  | 1-g    g
/// ----+----------
///     | 1-g    g        g = (2 - sqrt 2) / 2
/// ```
#[derive(Clone, Copy, Debug)]
pub struct SdirkTableau;

impl SdirkTableau {
    pub const GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;
    pub const A: [[f64; 2]; 2] = [[Self::GAMMA, 0.0], [1.0 - Self::GAMMA, Self::GAMMA]];
    pub const B: [f64; 2] = [1.0 - Self::GAMMA, Self::GAMMA];
    pub const C: [f64; 2] = [Self::GAMMA, 1.0];
}

/// How stage Jacobians are refreshed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonMode {
    /// Rebuild and factorise the Jacobian at every Newton iteration.
    #[default]
    Full,
    /// Factorise once per time step and reuse it for every iteration of both stages.
    Quasi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControlParams {
    /// Tolerance on the embedded error estimate.
    pub etol: f64,
    /// Newton convergence tolerance on the max-norm of the update.
    pub ktol: f64,
    /// Mesh iteration tolerance; `None` resolves to `1e-2 (x_r - x_l) / N^0`.
    pub meshtol: Option<f64>,
    /// Mesh balance parameter; `None` resolves to `meshtol / 10`.
    pub meshbal: Option<f64>,
    /// Safety factor on the solution step proposal.
    pub safety: f64,
    pub maxfac: f64,
    pub minfac: f64,
    pub newton_max_iters: usize,
    pub newton: NewtonMode,
    /// Initial step size.
    pub dt0: f64,
}

impl Default for StepControlParams {
    fn default() -> Self {
        StepControlParams {
            etol: 5e-3,
            ktol: 1e-10,
            meshtol: None,
            meshbal: None,
            safety: 0.6,
            maxfac: 2.0,
            minfac: 0.1,
            newton_max_iters: 10,
            newton: NewtonMode::Full,
            dt0: 1e-4,
        }
    }
}

impl StepControlParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::config(format!("control.{key}"), reason));
        if !(self.etol > 0.0) {
            return bad("etol", "must be positive");
        }
        if !(self.ktol > 0.0) {
            return bad("ktol", "must be positive");
        }
        if !(self.minfac > 0.0 && self.minfac < 1.0) {
            return bad("minfac", "must lie in (0, 1)");
        }
        if !(self.maxfac > 1.0) {
            return bad("maxfac", "must exceed 1");
        }
        if !(self.safety > 0.0) {
            return bad("safety", "must be positive");
        }
        if self.newton_max_iters == 0 {
            return bad("newton_max_iters", "must be at least 1");
        }
        if !(self.dt0 > 0.0) {
            return bad("dt0", "must be positive");
        }
        if let Some(tol) = self.meshtol {
            if !(tol > 0.0) {
                return bad("meshtol", "must be positive");
            }
        }
        if let Some(bal) = self.meshbal {
            if !(bal > 0.0 && bal < 1.0) {
                return bad("meshbal", "must lie in (0, 1)");
            }
            if let Some(tol) = self.meshtol {
                if bal >= tol {
                    return bad("meshbal", "must be smaller than meshtol");
                }
            }
        }
        Ok(())
    }

    /// `(MESHTOL, MESHBAL)` for a run on a domain of `width` with `n0` initial cells.
    pub fn mesh_tolerances(&self, width: f64, n0: usize) -> (f64, f64) {
        let tol = self.meshtol.unwrap_or(0.1 * width / n0 as f64);
        let bal = self.meshbal.unwrap_or(tol / 10.0);
        (tol, bal)
    }
}

/// A first-order ODE system `y' = f(t, y)` with a banded Jacobian.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    /// Lower and upper bandwidth of `df/dy`.
    fn bandwidth(&self) -> (usize, usize);
    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]);
    /// Adds `scale * df/dy (t, y)` to `jac`.
    fn add_jacobian(&self, t: f64, y: &[f64], scale: f64, jac: &mut BandMatrix);
}

/// The NLSE semi-discretisation on a mesh moving linearly in time from
/// `x_old` (at `t0`) with constant nodal velocity `xdot`.
pub struct MovingMeshNlse<'a> {
    x_old: &'a [f64],
    xdot: Vec<f64>,
    t0: f64,
    q: f64,
    /// Positions at the most recently requested time.
    cached: RefCell<(f64, Vec<f64>)>,
}

impl<'a> MovingMeshNlse<'a> {
    pub fn new(mesh_old: &'a Mesh, mesh_new: &Mesh, t0: f64, dt: f64, q: f64) -> Self {
        let xdot = mesh_old
            .nodes()
            .iter()
            .zip(mesh_new.nodes())
            .map(|(a, b)| (b - a) / dt)
            .collect();
        MovingMeshNlse {
            x_old: mesh_old.nodes(),
            xdot,
            t0,
            q,
            cached: RefCell::new((t0, mesh_old.nodes().to_vec())),
        }
    }

    /// A static mesh (zero velocity).
    pub fn frozen(mesh: &'a Mesh, q: f64) -> Self {
        MovingMeshNlse {
            x_old: mesh.nodes(),
            xdot: vec![0.0; mesh.node_count()],
            t0: 0.0,
            q,
            cached: RefCell::new((0.0, mesh.nodes().to_vec())),
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.xdot
    }

    fn with_positions<R>(&self, t: f64, f: impl FnOnce(&[f64]) -> R) -> R {
        let mut cache = self.cached.borrow_mut();
        if cache.0 != t {
            let s = t - self.t0;
            for ((p, x), v) in cache.1.iter_mut().zip(self.x_old).zip(&self.xdot) {
                *p = x + v * s;
            }
            cache.0 = t;
        }
        f(&cache.1)
    }
}

impl OdeSystem for MovingMeshNlse<'_> {
    fn dim(&self) -> usize {
        2 * self.x_old.len()
    }

    fn bandwidth(&self) -> (usize, usize) {
        (JACOBIAN_BANDWIDTH, JACOBIAN_BANDWIDTH)
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.with_positions(t, |x| nlse_rhs_interleaved(x, &self.xdot, self.q, y, out));
    }

    fn add_jacobian(&self, t: f64, y: &[f64], scale: f64, jac: &mut BandMatrix) {
        self.with_positions(t, |x| {
            add_nlse_jacobian(x, &self.xdot, self.q, y, scale, jac)
        });
    }
}

/// Wraps a system and replaces its Jacobian by central finite differences.
/// Used to cross-check analytic Jacobians.
pub struct FiniteDifferenceJacobian<S>(pub S);

impl<S: OdeSystem> OdeSystem for FiniteDifferenceJacobian<S> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn bandwidth(&self) -> (usize, usize) {
        self.0.bandwidth()
    }

    fn rhs(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.0.rhs(t, y, out)
    }

    fn add_jacobian(&self, t: f64, y: &[f64], scale: f64, jac: &mut BandMatrix) {
        let n = self.dim();
        let (kl, ku) = self.bandwidth();
        let mut yp = y.to_vec();
        let mut fp = vec![0.0; n];
        let mut fm = vec![0.0; n];
        for j in 0..n {
            let eps = 1e-7 * y[j].abs().max(1.0);
            yp[j] = y[j] + eps;
            self.0.rhs(t, &yp, &mut fp);
            yp[j] = y[j] - eps;
            self.0.rhs(t, &yp, &mut fm);
            yp[j] = y[j];
            for i in j.saturating_sub(ku)..=(j + kl).min(n - 1) {
                jac.add(i, j, scale * (fp[i] - fm[i]) / (2.0 * eps));
            }
        }
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Factorises the stage matrix `I - coef * df/dy` into `slot`, reusing its
/// storage when the shape matches.
fn stage_matrix<S: OdeSystem>(
    system: &S,
    t: f64,
    y: &[f64],
    coef: f64,
    counters: &mut RunCounters,
    slot: &mut Option<BandLu>,
) -> Result<()> {
    let n = system.dim();
    let (kl, ku) = system.bandwidth();
    let mut jac = match slot.take().map(BandLu::into_matrix) {
        Some(mut m) if m.shape() == (n, kl, ku) => {
            m.fill_zero();
            m
        }
        _ => BandMatrix::zeros(n, kl, ku),
    };
    for i in 0..n {
        jac.set(i, i, 1.0);
    }
    system.add_jacobian(t, y, -coef, &mut jac);
    counters.jacs += 1;
    *slot = Some(jac.factor()?);
    Ok(())
}

/// Solves the stage equation `k = f(t, base + coef k)` by Newton iteration,
/// stopping once the max-norm of the update drops below `ktol`.
///
/// `reuse` carries a factorisation between calls in quasi-Newton mode.
#[allow(clippy::too_many_arguments)]
pub fn newton_solve_stage<S: OdeSystem>(
    system: &S,
    t: f64,
    base: &[f64],
    coef: f64,
    guess: &[f64],
    ctrl: &StepControlParams,
    reuse: &mut Option<BandLu>,
    counters: &mut RunCounters,
) -> Result<Vec<f64>> {
    let n = system.dim();
    let mut k = guess.to_vec();
    let mut y = vec![0.0; n];
    let mut f = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut last_update = f64::INFINITY;
    let reused_stale = reuse.is_some();
    for _ in 0..ctrl.newton_max_iters {
        for i in 0..n {
            y[i] = base[i] + coef * k[i];
        }
        system.rhs(t, &y, &mut f);
        // Newton update solves (I - coef J) delta = f - k.
        for ((d, f), k) in delta.iter_mut().zip(&f).zip(&k) {
            *d = f - k;
        }
        // Full Newton refactorises every iteration; `reuse` then only
        // recycles the storage.
        if ctrl.newton == NewtonMode::Full || reuse.is_none() {
            stage_matrix(system, t, &y, coef, counters, reuse)?;
        }
        let lu = reuse.as_ref().expect("stage matrix factorised");
        lu.solve_in_place(&mut delta);
        counters.bs += 1;
        for (k, d) in k.iter_mut().zip(&delta) {
            *k += d;
        }
        last_update = max_norm(&delta);
        if !last_update.is_finite() {
            break;
        }
        if last_update < ctrl.ktol {
            return Ok(k);
        }
    }
    if ctrl.newton == NewtonMode::Quasi && reused_stale {
        // The stored factorisation may be too old; retry once with a fresh one.
        *reuse = None;
        return newton_solve_stage(system, t, base, coef, guess, ctrl, reuse, counters);
    }
    Err(Error::NewtonDiverged {
        iterations: ctrl.newton_max_iters,
        last_update,
    })
}

/// Result of one SDIRK2 step.
#[derive(Clone, Debug)]
pub struct SdirkStep {
    /// Second-order solution.
    pub w: Vec<f64>,
    /// Embedded first-order solution `w^n + dt k_1`.
    pub w_embedded: Vec<f64>,
    pub k1: Vec<f64>,
}

/// Advances `w` from `t` to `t + dt`. `k1_guess` warm-starts the first
/// stage (zero when absent); the second stage starts from `k_1`.
///
/// In quasi-Newton mode `reuse` holds the stage factorisation; callers keep
/// it across the sweeps of one step and clear it when `dt` changes.
/// A Newton failure in either stage counts one CTF and is returned.
#[allow(clippy::too_many_arguments)]
pub fn sdirk2_step<S: OdeSystem>(
    system: &S,
    t: f64,
    w: &[f64],
    dt: f64,
    ctrl: &StepControlParams,
    k1_guess: Option<&[f64]>,
    reuse: &mut Option<BandLu>,
    counters: &mut RunCounters,
) -> Result<SdirkStep> {
    let n = system.dim();
    let g = SdirkTableau::GAMMA;
    let coef = g * dt;
    let zero = vec![0.0; n];
    let guess = k1_guess.filter(|k| k.len() == n).unwrap_or(&zero);
    if reuse.as_ref().is_some_and(|lu| lu.dim() != n) {
        *reuse = None;
    }

    let k1 = newton_solve_stage(system, t + g * dt, w, coef, guess, ctrl, reuse, counters)
        .inspect_err(|_| counters.ctf += 1)?;
    let base2: Vec<f64> = w
        .iter()
        .zip(&k1)
        .map(|(w, k)| w + (1.0 - g) * dt * k)
        .collect();
    let k2 = newton_solve_stage(system, t + dt, &base2, coef, &k1, ctrl, reuse, counters)
        .inspect_err(|_| counters.ctf += 1)?;

    let b = SdirkTableau::B;
    let w_new = (0..n)
        .map(|i| w[i] + dt * (b[0] * k1[i] + b[1] * k2[i]))
        .collect();
    let w_embedded = (0..n).map(|i| w[i] + dt * k1[i]).collect();
    Ok(SdirkStep {
        w: w_new,
        w_embedded,
        k1,
    })
}

/// Mesh-weighted L2 norm of the difference between the two solutions
/// (interleaved `(U, V)` ordering).
pub fn solution_error(w: &[f64], w_embedded: &[f64], mesh: &Mesh) -> f64 {
    let x = mesh.nodes();
    let pointwise: Vec<f64> = (0..x.len())
        .map(|i| (w[2 * i] - w_embedded[2 * i]).hypot(w[2 * i + 1] - w_embedded[2 * i + 1]))
        .collect();
    (0..x.len() - 1)
        .map(|i| {
            let avg = 0.5 * (pointwise[i] + pointwise[i + 1]);
            (x[i + 1] - x[i]) * avg * avg
        })
        .sum::<f64>()
        .sqrt()
}

fn clamp_factor(raw: f64, ctrl: &StepControlParams) -> f64 {
    ctrl.maxfac.min(ctrl.minfac.max(raw))
}

/// Step proposal from the solution error estimate.
pub fn propose_dt_solution(dt: f64, err: f64, ctrl: &StepControlParams) -> f64 {
    if err == 0.0 {
        return dt * ctrl.maxfac;
    }
    dt * clamp_factor(ctrl.safety * (ctrl.etol / err).sqrt(), ctrl)
}

/// Step proposal from the mesh convergence indicator.
pub fn propose_dt_mesh(dt: f64, mesherr: f64, meshbal: f64, ctrl: &StepControlParams) -> f64 {
    if mesherr == 0.0 {
        return dt * ctrl.maxfac;
    }
    dt * clamp_factor(mesherr.ln() / meshbal.ln(), ctrl)
}
