//! Curvature monitor function, its floor and smoothing, and the global
//! difficulty indicator `eta`.
//!
//! Monitor values live at cell midpoints: `midpoint[k]` is `M_{k+1/2}`, the
//! value on the cell between nodes `k` and `k + 1`.

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::state::FieldPair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonitorParams {
    /// Smoothing decay parameter; kernel weights are `(gamma / (gamma + 1))^|j|`.
    pub gamma: f64,
    /// Half-width of the smoothing stencil.
    pub p: usize,
    /// Replaces both computed floors with a fixed value.
    pub floor_override: Option<f64>,
}

impl Default for MonitorParams {
    fn default() -> Self {
        MonitorParams {
            gamma: 2.0,
            p: 3,
            floor_override: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorProfile {
    /// Raw midpoint values `M_{k+1/2}`, `k = 0..N-1`.
    pub midpoint: Vec<f64>,
    /// Smoothed midpoint values.
    pub smoothed: Vec<f64>,
    pub floor_u: f64,
    pub floor_v: f64,
}

impl MonitorProfile {
    /// Smoothed values used to drive the mesh. A profile that is identically
    /// zero (flat solution and zero floor) is replaced by the constant 1, which
    /// equidistributes to a uniform mesh.
    pub fn mesh_weights(&self) -> Vec<f64> {
        if self.smoothed.iter().all(|&m| m == 0.0) {
            vec![1.0; self.smoothed.len()]
        } else {
            self.smoothed.clone()
        }
    }
}

/// Approximates `sqrt(|u_xx|)` at each node from the divided second
/// difference. End values copy their interior neighbour.
pub fn curvature_root(values: &[f64], mesh: &Mesh) -> Vec<f64> {
    let x = mesh.nodes();
    let n = mesh.cells();
    debug_assert_eq!(values.len(), x.len());
    let mut w = vec![0.0; n + 1];
    if n < 2 {
        return w;
    }
    for i in 1..n {
        let h_left = x[i] - x[i - 1];
        let h_right = x[i + 1] - x[i];
        let g_left = (values[i] - values[i - 1]) / h_left;
        let g_right = (values[i + 1] - values[i]) / h_right;
        w[i] = (2.0 * ((g_right - g_left) / (h_right + h_left)).abs()).sqrt();
    }
    w[0] = w[1];
    w[n] = w[n - 1];
    w
}

/// Trapezoidal mean of the nodal values `w` over the domain.
pub fn monitor_floor(w: &[f64], mesh: &Mesh) -> f64 {
    let x = mesh.nodes();
    let integral: f64 = (0..mesh.cells())
        .map(|i| 0.5 * (x[i + 1] - x[i]) * (w[i + 1] + w[i]))
        .sum();
    integral / mesh.width()
}

/// Exponentially weighted moving average over `2p + 1` neighbouring cells,
/// truncated (and renormalised) at the domain ends.
pub fn smooth_monitor(midpoint: &[f64], gamma: f64, p: usize) -> Vec<f64> {
    let ratio = gamma / (gamma + 1.0);
    let weights: Vec<f64> = (0..=p).map(|j| ratio.powi(j as i32)).collect();
    let len = midpoint.len();
    let full: f64 = weights[0] + 2.0 * weights[1..].iter().sum::<f64>();
    let window = |i: usize| {
        let lo = i.saturating_sub(p);
        let hi = (i + p).min(len - 1);
        (lo..=hi).fold((0.0, 0.0), |(num, den), k| {
            let wgt = weights[k.abs_diff(i)];
            (num + wgt * midpoint[k], den + wgt)
        })
    };
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        if i >= p && i + p < len {
            let mut num = weights[0] * midpoint[i];
            for (j, w) in weights.iter().enumerate().skip(1) {
                num += w * (midpoint[i - j] + midpoint[i + j]);
            }
            out.push(num / full);
        } else {
            let (num, den) = window(i);
            out.push(num / den);
        }
    }
    out
}

/// Builds the raw and smoothed midpoint monitor for the pair `(U, V)`.
pub fn assemble_monitor(fields: &FieldPair, mesh: &Mesh, params: &MonitorParams) -> MonitorProfile {
    let w_u = curvature_root(&fields.u, mesh);
    let w_v = curvature_root(&fields.v, mesh);
    let (floor_u, floor_v) = match params.floor_override {
        Some(phi) => (phi, phi),
        None => (monitor_floor(&w_u, mesh), monitor_floor(&w_v, mesh)),
    };
    let midpoint: Vec<f64> = (0..mesh.cells())
        .map(|k| {
            let m_u = floor_u + 0.5 * (w_u[k + 1] + w_u[k]);
            let m_v = floor_v + 0.5 * (w_v[k + 1] + w_v[k]);
            0.5 * (m_u + m_v)
        })
        .collect();
    let smoothed = smooth_monitor(&midpoint, params.gamma, params.p);
    MonitorProfile {
        midpoint,
        smoothed,
        floor_u,
        floor_v,
    }
}

/// `eta = ((1/N) * integral of M)^2` using the raw midpoint values.
pub fn eta(profile: &MonitorProfile, mesh: &Mesh) -> f64 {
    let x = mesh.nodes();
    let mass: f64 = profile
        .midpoint
        .iter()
        .enumerate()
        .map(|(k, m)| m * (x[k + 1] - x[k]))
        .sum();
    let mean = mass / mesh.cells() as f64;
    mean * mean
}
