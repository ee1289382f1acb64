//! The NLSE on a moving mesh: semi-discrete right-hand side and Jacobian,
//! initial data, exact solitons, discrete invariants and error norms.

use crate::linalg::BandMatrix;
use crate::mesh::Mesh;
use crate::state::{FieldPair, InitialCondition, ProblemConfig, SolitonParams};

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// Single soliton `sqrt(2a/q) exp(i(c(x-x0)/2 - (c^2-4a)t/4)) sech(sqrt(a)(x-x0-ct))`,
/// split into real and imaginary parts.
pub fn exact_single_soliton(params: &SolitonParams, q: f64, x: f64, t: f64) -> (f64, f64) {
    let SolitonParams { a, c, x0 } = *params;
    let modulus = (2.0 * a / q).sqrt() * sech(a.sqrt() * (x - x0 - c * t));
    let phase = 0.5 * c * (x - x0) - 0.25 * (c * c - 4.0 * a) * t;
    (modulus * phase.cos(), modulus * phase.sin())
}

/// Modulus of [`exact_single_soliton`].
pub fn exact_single_soliton_modulus(params: &SolitonParams, q: f64, x: f64, t: f64) -> f64 {
    (2.0 * params.a / q).sqrt() * sech(params.a.sqrt() * (x - params.x0 - params.c * t))
}

/// `psi_0(x)` for the configured initial condition.
pub fn initial_condition(problem: &ProblemConfig, x: f64) -> (f64, f64) {
    let q = problem.q;
    match problem.initial_condition {
        InitialCondition::SingleSoliton { a, c, x0 } => {
            exact_single_soliton(&SolitonParams { a, c, x0 }, q, x, 0.0)
        }
        InitialCondition::TwoSoliton {
            a1,
            c1,
            x01,
            a2,
            c2,
            x02,
        } => {
            let (u1, v1) = exact_single_soliton(
                &SolitonParams {
                    a: a1,
                    c: c1,
                    x0: x01,
                },
                q,
                x,
                0.0,
            );
            let (u2, v2) = exact_single_soliton(
                &SolitonParams {
                    a: a2,
                    c: c2,
                    x0: x02,
                },
                q,
                x,
                0.0,
            );
            (u1 + u2, v1 + v2)
        }
        InitialCondition::Sech => (sech(x), 0.0),
        InitialCondition::Zero => (0.0, 0.0),
    }
}

/// Initial fields on `mesh` with the Dirichlet ends imposed.
pub fn sample_initial(problem: &ProblemConfig, mesh: &Mesh) -> FieldPair {
    let mut fields = FieldPair::sample(mesh, |x| initial_condition(problem, x));
    fields.zero_boundaries();
    fields
}

/// Time derivatives `(U', V')` of the moving-mesh semi-discretisation with
/// central differences. Boundary derivatives are zero.
pub fn nlse_rhs(fields: &FieldPair, mesh: &Mesh, xdot: &[f64], q: f64) -> FieldPair {
    let w = fields.interleave();
    let mut out = vec![0.0; w.len()];
    nlse_rhs_interleaved(mesh.nodes(), xdot, q, &w, &mut out);
    FieldPair::from_interleaved(&out)
}

/// [`nlse_rhs`] on the interleaved state `(U_0, V_0, U_1, V_1, ...)`.
pub fn nlse_rhs_interleaved(x: &[f64], xdot: &[f64], q: f64, w: &[f64], out: &mut [f64]) {
    let n = x.len() - 1;
    out[..2].fill(0.0);
    out[2 * n..].fill(0.0);
    for i in 1..n {
        let (u_m, v_m) = (w[2 * i - 2], w[2 * i - 1]);
        let (u, v) = (w[2 * i], w[2 * i + 1]);
        let (u_p, v_p) = (w[2 * i + 2], w[2 * i + 3]);
        let h_left = x[i] - x[i - 1];
        let h_right = x[i + 1] - x[i];
        let span = h_left + h_right;
        let lap_u = 2.0 / span * ((u_p - u) / h_right - (u - u_m) / h_left);
        let lap_v = 2.0 / span * ((v_p - v) / h_right - (v - v_m) / h_left);
        let cubic = q * (u * u + v * v);
        out[2 * i] = xdot[i] * (u_p - u_m) / span - lap_v - cubic * v;
        out[2 * i + 1] = xdot[i] * (v_p - v_m) / span + lap_u + cubic * u;
    }
}

/// Lower/upper bandwidth of the interleaved Jacobian.
pub const JACOBIAN_BANDWIDTH: usize = 3;

/// Adds `scale * df/dw` to `jac` (interleaved ordering, band 3/3).
pub fn add_nlse_jacobian(
    x: &[f64],
    xdot: &[f64],
    q: f64,
    w: &[f64],
    scale: f64,
    jac: &mut BandMatrix,
) {
    let n = x.len() - 1;
    for i in 1..n {
        let (u, v) = (w[2 * i], w[2 * i + 1]);
        let h_left = x[i] - x[i - 1];
        let h_right = x[i + 1] - x[i];
        let span = h_left + h_right;
        let c_left = 2.0 / (span * h_left);
        let c_right = 2.0 / (span * h_right);
        let adv = xdot[i] / span;
        let (ru, rv) = (2 * i, 2 * i + 1);
        let (um, vm, uc, vc, up, vp) =
            (2 * i - 2, 2 * i - 1, 2 * i, 2 * i + 1, 2 * i + 2, 2 * i + 3);

        // U'_i = adv (U_{i+1} - U_{i-1}) - lap(V) - q (U^2 + V^2) V
        jac.add(ru, um, -scale * adv);
        jac.add(ru, up, scale * adv);
        jac.add(ru, vm, -scale * c_left);
        jac.add(ru, vp, -scale * c_right);
        jac.add(
            ru,
            vc,
            scale * ((c_left + c_right) - q * (u * u + 3.0 * v * v)),
        );
        jac.add(ru, uc, -scale * 2.0 * q * u * v);

        // V'_i = adv (V_{i+1} - V_{i-1}) + lap(U) + q (U^2 + V^2) U
        jac.add(rv, vm, -scale * adv);
        jac.add(rv, vp, scale * adv);
        jac.add(rv, um, scale * c_left);
        jac.add(rv, up, scale * c_right);
        jac.add(
            rv,
            uc,
            scale * (-(c_left + c_right) + q * (3.0 * u * u + v * v)),
        );
        jac.add(rv, vc, scale * 2.0 * q * u * v);
    }
}

/// Discrete charge `Q_h` and energy `E_h`.
///
/// `E_h` follows the printed quadrature literally: the sum runs over
/// `i = 1..N-1` and weights the forward difference `U_{i+1} - U_i` with the
/// backward width `h_i`.
pub fn conserved_quantities(fields: &FieldPair, mesh: &Mesh, q: f64) -> (f64, f64) {
    let x = mesh.nodes();
    let n = mesh.cells();
    let (u, v) = (&fields.u, &fields.v);
    let mut charge = 0.0;
    let mut energy = 0.0;
    for i in 1..n {
        let h_i = x[i] - x[i - 1];
        let h_next = x[i + 1] - x[i];
        let density = u[i] * u[i] + v[i] * v[i];
        charge += 0.5 * (h_i + h_next) * density;
        let du = (u[i + 1] - u[i]) / h_i;
        let dv = (v[i + 1] - v[i]) / h_i;
        energy += h_i * (du * du + dv * dv - 0.5 * q * density * density);
    }
    (charge, energy)
}

/// Mesh-weighted L2 norm of `|psi_h| - rho` over the domain.
pub fn l2_error(fields: &FieldPair, mesh: &Mesh, exact_modulus: impl Fn(f64) -> f64) -> f64 {
    let x = mesh.nodes();
    let e: Vec<f64> = fields
        .modulus()
        .iter()
        .zip(x)
        .map(|(m, &xi)| m - exact_modulus(xi))
        .collect();
    let sum: f64 = (1..x.len())
        .map(|i| 0.5 * (x[i] - x[i - 1]) * (e[i] * e[i] + e[i - 1] * e[i - 1]))
        .sum();
    (sum / mesh.width()).sqrt()
}
