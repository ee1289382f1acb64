//! Node-count control: when to change `N`, how many nodes to use, and how
//! to move the solution onto the regridded mesh.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::mmpde::equidistribute_fixed;
use crate::monitor::MonitorProfile;
use crate::state::{FieldPair, State};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineParams {
    pub rtol: f64,
    /// Upper band factor, `alpha > 1`.
    pub alpha: f64,
    /// Lower band factor, `0 < beta < 1`.
    pub beta: f64,
    pub kappa: f64,
    pub maxfac: f64,
    pub minfac_enrich: f64,
    pub minfac_coarsen: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        RefineParams {
            rtol: 1.5e-2,
            alpha: 1.4,
            beta: 0.8,
            kappa: 1.0,
            maxfac: 2.0,
            minfac_enrich: 1.2,
            minfac_coarsen: 0.3,
        }
    }
}

impl RefineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(Error::config(format!("refine.{key}"), reason));
        if !(self.rtol > 0.0) {
            return bad("rtol", "must be positive");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha", "must exceed 1");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad("beta", "must lie in (0, 1)");
        }
        if !(self.kappa >= 1.0) {
            return bad("kappa", "must be at least 1");
        }
        if !(self.maxfac >= 1.0 && self.minfac_enrich >= 1.0) {
            return bad("minfac_enrich", "enrichment factors must be at least 1");
        }
        if !(self.minfac_coarsen > 0.0 && self.minfac_coarsen < 1.0) {
            return bad("minfac_coarsen", "must lie in (0, 1)");
        }
        Ok(())
    }

    /// Whether `eta` lies strictly inside `(beta RTOL, alpha RTOL)`.
    pub fn in_band(&self, eta: f64) -> bool {
        self.beta * self.rtol < eta && eta < self.alpha * self.rtol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Enrich,
    Coarsen,
}

pub fn needs_refinement(eta: f64, params: &RefineParams) -> Decision {
    if params.in_band(eta) {
        Decision::Keep
    } else if eta >= params.alpha * params.rtol {
        Decision::Enrich
    } else {
        Decision::Coarsen
    }
}

/// `floor(N * min(maxfac, max(minfac, kappa sqrt(eta / RTOL)))) + 1`, with
/// `minfac` chosen by the direction of the change.
pub fn predict_node_count(n: usize, eta: f64, params: &RefineParams, direction: Decision) -> usize {
    let minfac = match direction {
        Decision::Coarsen => params.minfac_coarsen,
        Decision::Enrich | Decision::Keep => params.minfac_enrich,
    };
    let factor = params
        .maxfac
        .min(minfac.max(params.kappa * (eta / params.rtol).sqrt()));
    let predicted = (n as f64 * factor).floor() as usize + 1;
    debug_assert!(
        direction != Decision::Enrich || predicted >= n,
        "enrichment decreased N"
    );
    predicted
}

/// Interpolant used to move nodal values between meshes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolant {
    /// Piecewise cubic Hermite with three-point slopes.
    #[default]
    Cubic,
    Linear,
}

/// Three-point derivative estimates at every node (exact for quadratics).
fn three_point_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len() - 1;
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 1 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n + 1];
    for i in 1..n {
        let (hl, hr) = (h[i - 1], h[i]);
        d[i] = (hr * delta[i - 1] + hl * delta[i]) / (hl + hr);
    }
    d[0] = ((2.0 * h[0] + h[1]) * delta[0] - h[0] * delta[1]) / (h[0] + h[1]);
    d[n] = ((2.0 * h[n - 1] + h[n - 2]) * delta[n - 1] - h[n - 1] * delta[n - 2])
        / (h[n - 1] + h[n - 2]);
    d
}

/// Evaluates the interpolant of `values` (nodal on `from`) at `points`.
pub fn interpolate(from: &Mesh, values: &[f64], points: &[f64], kind: Interpolant) -> Vec<f64> {
    let x = from.nodes();
    let slopes = match kind {
        Interpolant::Cubic => Some(three_point_slopes(x, values)),
        Interpolant::Linear => None,
    };
    points
        .iter()
        .map(|&p| {
            let k = from.locate(p);
            let h = x[k + 1] - x[k];
            let s = (p - x[k]) / h;
            let (y0, y1) = (values[k], values[k + 1]);
            match &slopes {
                None => y0 + s * (y1 - y0),
                Some(d) => {
                    let s2 = s * s;
                    let s3 = s2 * s;
                    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                    let h10 = s3 - 2.0 * s2 + s;
                    let h01 = -2.0 * s3 + 3.0 * s2;
                    let h11 = s3 - s2;
                    h00 * y0 + h10 * h * d[k] + h01 * y1 + h11 * h * d[k + 1]
                }
            }
        })
        .collect()
}

/// Transfers both fields onto `to`, re-imposing zero boundary values.
pub fn transfer(from: &Mesh, fields: &FieldPair, to: &Mesh, kind: Interpolant) -> FieldPair {
    let mut out = FieldPair {
        u: interpolate(from, &fields.u, to.nodes(), kind),
        v: interpolate(from, &fields.v, to.nodes(), kind),
    };
    out.zero_boundaries();
    out
}

/// Builds an `n_new`-cell mesh equidistributing `profile` (defined on the
/// current mesh) and interpolates the solution onto it.
pub fn regrid_and_transfer(
    state: &State,
    profile: &MonitorProfile,
    n_new: usize,
    kind: Interpolant,
) -> Result<State> {
    if n_new < 2 {
        return Err(Error::InvalidMesh(format!(
            "regrid needs N >= 2, got {n_new}"
        )));
    }
    let mesh = equidistribute_fixed(&state.mesh, &profile.mesh_weights(), n_new)?;
    let fields = transfer(&state.mesh, &state.fields, &mesh, kind);
    Ok(State {
        t: state.t,
        dt: state.dt,
        mesh,
        fields,
    })
}
