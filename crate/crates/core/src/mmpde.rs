//! Mesh movement: the semi-discrete moving mesh PDE, its backward Euler
//! solve with under-relaxation, and de Boor equidistribution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;
use crate::mesh::Mesh;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshSolveParams {
    /// Temporal smoothing time scale of the mesh equation.
    pub tau: f64,
    /// Weight kept on the previous iterate.
    pub omega: f64,
    /// Coupled mesh/solution sweeps per time step.
    pub sweeps: usize,
}

impl Default for MeshSolveParams {
    fn default() -> Self {
        MeshSolveParams {
            tau: 1e-3,
            omega: 0.8,
            sweeps: 4,
        }
    }
}

impl MeshSolveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config("meshsolve.tau", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::config("meshsolve.omega", "must lie in [0, 1)"));
        }
        if self.sweeps == 0 {
            return Err(Error::config("meshsolve.sweeps", "must be at least 1"));
        }
        Ok(())
    }
}

/// Coefficients of the mesh equation at one interior node:
/// `xdot_i = b * (m_right * h_{i+1} - m_left * h_i)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeCoefficient {
    pub b: f64,
    pub m_left: f64,
    pub m_right: f64,
}

/// Per-node coefficients for interior nodes `1..N-1` (returned 0-based, so
/// entry `k` belongs to node `k + 1`). `weights` are the smoothed midpoint
/// monitor values.
pub fn mesh_rhs_coefficients(mesh: &Mesh, weights: &[f64], tau: f64) -> Vec<NodeCoefficient> {
    let x = mesh.nodes();
    let n = mesh.cells();
    debug_assert_eq!(weights.len(), n);
    (1..n)
        .map(|i| {
            let h_left = x[i] - x[i - 1];
            let h_right = x[i + 1] - x[i];
            let m_left = weights[i - 1];
            let m_right = weights[i];
            // Linear interpolation of the midpoint values to node i.
            let m_node = (m_left * h_right + m_right * h_left) / (h_left + h_right);
            assert!(m_node > 0.0, "monitor must be positive at node {i}");
            let scale = m_node * (h_right + h_left);
            NodeCoefficient {
                b: 4.0 / (tau * scale * scale),
                m_left,
                m_right,
            }
        })
        .collect()
}

/// Semi-discrete mesh velocity at every node (zero at the fixed ends).
pub fn mesh_velocity(mesh: &Mesh, weights: &[f64], tau: f64) -> Vec<f64> {
    let x = mesh.nodes();
    let mut xdot = vec![0.0; x.len()];
    for (k, c) in mesh_rhs_coefficients(mesh, weights, tau).iter().enumerate() {
        let i = k + 1;
        xdot[i] = c.b * (c.m_right * (x[i + 1] - x[i]) - c.m_left * (x[i] - x[i - 1]));
    }
    xdot
}

/// Output of one backward Euler mesh solve.
#[derive(Clone, Debug)]
pub struct MeshUpdate {
    /// Under-relaxed iterate.
    pub mesh: Mesh,
    /// Raw backward Euler solution before relaxation.
    pub raw: Vec<f64>,
}

/// One backward Euler step of the mesh equation from `mesh_old` (the mesh at
/// `t^n`) with coefficients frozen on `iterate`, followed by under-relaxation
/// towards `iterate`.
pub fn solve_mesh_step(
    mesh_old: &Mesh,
    iterate: &Mesh,
    weights: &[f64],
    dt: f64,
    params: &MeshSolveParams,
) -> Result<MeshUpdate> {
    assert!(dt > 0.0, "mesh step needs dt > 0");
    assert_eq!(mesh_old.node_count(), iterate.node_count());
    let n = iterate.cells();
    let x_old = mesh_old.nodes();
    let mut raw = x_old.to_vec();
    if n >= 2 {
        let coeffs = mesh_rhs_coefficients(iterate, weights, params.tau);
        let m = n - 1;
        let mut lower = vec![0.0; m];
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for (k, c) in coeffs.iter().enumerate() {
            let left = dt * c.b * c.m_left;
            let right = dt * c.b * c.m_right;
            lower[k] = -left;
            upper[k] = -right;
            diag[k] = 1.0 + left + right;
            assert!(
                diag[k] > left + right,
                "mesh matrix lost diagonal dominance"
            );
            rhs[k] = x_old[k + 1];
        }
        rhs[0] += dt * coeffs[0].b * coeffs[0].m_left * mesh_old.x_l();
        rhs[m - 1] += dt * coeffs[m - 1].b * coeffs[m - 1].m_right * mesh_old.x_r();
        let interior = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        raw[1..n].copy_from_slice(&interior);
    }
    let omega = params.omega;
    let mut relaxed: Vec<f64> = raw
        .iter()
        .zip(iterate.nodes())
        .map(|(star, prev)| (1.0 - omega) * star + omega * prev)
        .collect();
    relaxed[0] = mesh_old.x_l();
    relaxed[n] = mesh_old.x_r();
    Ok(MeshUpdate {
        mesh: Mesh::new(relaxed)?,
        raw,
    })
}

/// Places `n_new + 1` nodes at equal increments of the integral of a
/// piecewise-constant monitor (`weights[k]` on cell `k` of `mesh`).
pub fn equidistribute_fixed(mesh: &Mesh, weights: &[f64], n_new: usize) -> Result<Mesh> {
    assert!(n_new >= 1);
    let x = mesh.nodes();
    let n = mesh.cells();
    debug_assert_eq!(weights.len(), n);
    let mut cumulative = Vec::with_capacity(n + 1);
    cumulative.push(0.0);
    for k in 0..n {
        cumulative.push(cumulative[k] + weights[k] * (x[k + 1] - x[k]));
    }
    let total = cumulative[n];
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::InvalidMesh(format!(
            "monitor mass must be positive and finite, got {total}"
        )));
    }
    let mut nodes = Vec::with_capacity(n_new + 1);
    nodes.push(mesh.x_l());
    let mut k = 0;
    for j in 1..n_new {
        let target = total * j as f64 / n_new as f64;
        while k + 1 < n && cumulative[k + 1] < target {
            k += 1;
        }
        nodes.push(x[k] + (target - cumulative[k]) / weights[k]);
    }
    nodes.push(mesh.x_r());
    Mesh::new(nodes)
}

/// Result of an iterated equidistribution.
#[derive(Clone, Debug)]
pub struct Equidistributed {
    pub mesh: Mesh,
    pub iterations: usize,
    /// Largest node displacement in the final iteration (infinite when the
    /// final iteration changed the node count).
    pub last_change: f64,
    pub converged: bool,
}

impl Equidistributed {
    pub fn require_converged(self) -> Result<Mesh> {
        if self.converged {
            Ok(self.mesh)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations,
                last_change: self.last_change,
            })
        }
    }
}

pub const DEBOOR_MAX_ITERATIONS: usize = 50;

/// de Boor iteration: equidistribute the monitor of the current mesh, then
/// re-evaluate the monitor on the result, until successive meshes differ by
/// less than `gtol` or `max_iterations` passes have run.
pub fn equidistribute<F>(
    start: &Mesh,
    n_new: usize,
    gtol: f64,
    max_iterations: usize,
    mut monitor_on: F,
) -> Result<Equidistributed>
where
    F: FnMut(&Mesh) -> Vec<f64>,
{
    let mut mesh = start.clone();
    let mut last_change = f64::INFINITY;
    for iteration in 1..=max_iterations {
        let weights = monitor_on(&mesh);
        let next = equidistribute_fixed(&mesh, &weights, n_new)?;
        last_change = if next.node_count() == mesh.node_count() {
            next.max_displacement(&mesh)
        } else {
            f64::INFINITY
        };
        mesh = next;
        if last_change < gtol {
            return Ok(Equidistributed {
                mesh,
                iterations: iteration,
                last_change,
                converged: true,
            });
        }
    }
    Ok(Equidistributed {
        mesh,
        iterations: max_iterations,
        last_change,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(omega: f64) -> MeshSolveParams {
        MeshSolveParams {
            tau: 1.0,
            omega,
            sweeps: 4,
        }
    }

    #[test]
    fn coefficients_uniform_monitor() {
        let mesh = Mesh::uniform(0.0, 2.0, 8).unwrap();
        let h: f64 = 0.25;
        for c in mesh_rhs_coefficients(&mesh, &[1.0; 8], 1.0) {
            assert!((c.b - 1.0 / (h * h)).abs() < 1e-12);
        }
        assert!(mesh_velocity(&mesh, &[1.0; 8], 1.0)
            .iter()
            .all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn velocity_hand_value() {
        // h = 1, M_{i-1/2} = 1, M_{i+1/2} = 2 at node 1.
        let mesh = Mesh::uniform(0.0, 2.0, 2).unwrap();
        for tau in [1.0, 0.25, 1e-3] {
            let xdot = mesh_velocity(&mesh, &[1.0, 2.0], tau);
            // Independent evaluation: M_i = 1.5, (4/tau) (1.5 * 2)^-2 * (2 - 1).
            let m_i = (1.0 * 0.5 + 2.0 * 0.5) / 1.0;
            let expected = 4.0 / tau / (m_i * 2.0_f64).powi(2) * (2.0 * 1.0 - 1.0 * 1.0);
            assert!((xdot[1] - expected).abs() < 1e-12 * expected);
            assert!((xdot[1] - 4.0 / (9.0 * tau)).abs() < 1e-12 * expected);
        }
    }

    #[test]
    fn halving_tau_doubles_velocity() {
        let mesh = Mesh::new(vec![0.0, 0.3, 0.45, 0.9, 1.0]).unwrap();
        let w = [1.0, 3.0, 0.5, 2.0];
        let a = mesh_velocity(&mesh, &w, 0.1);
        let b = mesh_velocity(&mesh, &w, 0.05);
        for (a, b) in a.iter().zip(&b) {
            assert!((2.0 * a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn uniform_mesh_is_fixed_point() {
        let mesh = Mesh::uniform(-30.0, 70.0, 77).unwrap();
        let weights = vec![2.5; 77];
        for omega in [0.0, 0.8] {
            let out = solve_mesh_step(&mesh, &mesh, &weights, 0.3, &params(omega)).unwrap();
            assert!(out.mesh.max_displacement(&mesh) < 1e-13);
        }
    }

    #[test]
    fn omega_zero_returns_raw() {
        let mesh = Mesh::new(vec![0.0, 0.1, 0.2, 0.7, 1.0]).unwrap();
        let weights = [1.0, 5.0, 1.0, 2.0];
        let out = solve_mesh_step(&mesh, &mesh, &weights, 0.1, &params(0.0)).unwrap();
        assert_eq!(out.mesh.nodes(), &out.raw[..]);
        let relaxed = solve_mesh_step(&mesh, &mesh, &weights, 0.1, &params(0.8)).unwrap();
        for i in 0..5 {
            let expected = 0.2 * out.raw[i] + 0.8 * mesh.nodes()[i];
            assert!((relaxed.mesh.nodes()[i] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn single_interior_node_closed_form() {
        let mesh_old = Mesh::new(vec![0.0, 0.3, 1.0]).unwrap();
        let (m_l, m_r, dt, tau) = (2.0, 1.0, 0.05, 0.5);
        let p = MeshSolveParams {
            tau,
            omega: 0.0,
            sweeps: 1,
        };
        let out = solve_mesh_step(&mesh_old, &mesh_old, &[m_l, m_r], dt, &p).unwrap();
        // Closed form of (x - x_old)/dt = B (m_r (1 - x) - m_l (x - 0)).
        let (h1, h2) = (0.3, 0.7);
        let m_node = (m_l * h2 + m_r * h1) / (h1 + h2);
        let b = 4.0 / tau / (m_node * (h1 + h2)).powi(2);
        let x = (0.3 + dt * b * m_r * 1.0) / (1.0 + dt * b * (m_l + m_r));
        assert!((out.mesh.nodes()[1] - x).abs() < 1e-14);
    }

    #[test]
    fn mesh_step_keeps_endpoints() {
        let mesh = Mesh::new(vec![-2.0, -1.5, 0.0, 0.1, 3.0]).unwrap();
        let out =
            solve_mesh_step(&mesh, &mesh, &[1.0, 10.0, 100.0, 1.0], 5.0, &params(0.8)).unwrap();
        assert_eq!(out.mesh.x_l(), -2.0);
        assert_eq!(out.mesh.x_r(), 3.0);
    }

    #[test]
    fn fixed_equidistribution_hand_example() {
        let mesh = Mesh::uniform(0.0, 1.0, 2).unwrap();
        let out = equidistribute_fixed(&mesh, &[3.0, 1.0], 4).unwrap();
        let expected = [0.0, 1.0 / 6.0, 1.0 / 3.0, 0.5, 1.0];
        for (x, e) in out.nodes().iter().zip(expected) {
            assert!((x - e).abs() < 1e-15);
        }
        // Cell masses measured against the original piecewise-constant monitor.
        let mass = |a: f64, b: f64| {
            let m = |x: f64| if x < 0.5 { 3.0 } else { 1.0 };
            let split = 0.5f64.clamp(a, b);
            m(0.5 * (a + split)) * (split - a) + m(0.5 * (split + b)) * (b - split)
        };
        for w in out.nodes().windows(2) {
            assert!((mass(w[0], w[1]) - 0.5).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_monitor_gives_uniform_mesh() {
        let start = Mesh::uniform(0.0, 3.0, 12).unwrap();
        let out = equidistribute(&start, 12, 1e-10, 50, |m| vec![1.0; m.cells()]).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert!(out.mesh.max_displacement(&start) < 1e-14);

        let skewed = Mesh::new(vec![0.0, 0.1, 2.0, 3.0]).unwrap();
        let out = equidistribute(&skewed, 6, 1e-10, 50, |m| vec![7.0; m.cells()]).unwrap();
        assert!(out.converged && out.iterations <= 2);
        assert!(
            out.mesh
                .max_displacement(&Mesh::uniform(0.0, 3.0, 6).unwrap())
                < 1e-14
        );
    }

    #[test]
    fn iterated_equidistribution_of_smooth_monitor() {
        let f = |x: f64| 1.0 + 20.0 * (-(x - 0.3).powi(2) / 0.01).exp();
        let start = Mesh::uniform(0.0, 1.0, 40).unwrap();
        let gtol = 1e-6;
        let monitor = |m: &Mesh| -> Vec<f64> {
            m.nodes()
                .windows(2)
                .map(|w| f(0.5 * (w[0] + w[1])))
                .collect()
        };
        let out = equidistribute(&start, 40, gtol, 50, monitor).unwrap();
        assert!(out.converged, "{out:?}");
        let masses: Vec<f64> = {
            let w = monitor(&out.mesh);
            out.mesh
                .cell_widths()
                .iter()
                .zip(&w)
                .map(|(h, m)| h * m)
                .collect()
        };
        let mean = masses.iter().sum::<f64>() / masses.len() as f64;
        let spread = masses.iter().map(|m| (m - mean).abs()).fold(0.0, f64::max) / mean;
        assert!(spread < 10.0 * gtol / 1e-6 * 1e-3, "spread {spread}");
    }

    #[test]
    fn non_convergence_reported() {
        // Alternating monitor that never settles.
        let mut flip = false;
        let out = equidistribute(&Mesh::uniform(0.0, 1.0, 4).unwrap(), 4, 1e-12, 5, |m| {
            flip = !flip;
            let mut w = vec![1.0; m.cells()];
            w[0] = if flip { 5.0 } else { 1.0 };
            w
        })
        .unwrap();
        assert!(!out.converged);
        assert!(matches!(
            out.require_converged(),
            Err(Error::NoConvergence { iterations: 5, .. })
        ));
    }
}
