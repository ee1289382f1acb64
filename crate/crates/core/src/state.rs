//! Solution state carried between time steps and the problem definition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Nodal values of the real part `U` and imaginary part `V` of psi.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPair {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl FieldPair {
    pub fn zeros(nodes: usize) -> Self {
        FieldPair {
            u: vec![0.0; nodes],
            v: vec![0.0; nodes],
        }
    }

    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::InvalidMesh(format!(
                "field lengths differ: U has {}, V has {}",
                u.len(),
                v.len()
            )));
        }
        Ok(FieldPair { u, v })
    }

    /// Samples `f(x) -> (u, v)` at every node of `mesh`.
    pub fn sample(mesh: &Mesh, mut f: impl FnMut(f64) -> (f64, f64)) -> Self {
        let (u, v) = mesh.nodes().iter().map(|&x| f(x)).unzip();
        FieldPair { u, v }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Imposes homogeneous Dirichlet data at both ends.
    pub fn zero_boundaries(&mut self) {
        if let Some(last) = self.u.len().checked_sub(1) {
            self.u[0] = 0.0;
            self.u[last] = 0.0;
            self.v[0] = 0.0;
            self.v[last] = 0.0;
        }
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .collect()
    }

    /// Packs into the interleaved ordering `(U_0, V_0, U_1, V_1, ...)`.
    pub fn interleave(&self) -> Vec<f64> {
        self.u
            .iter()
            .zip(&self.v)
            .flat_map(|(u, v)| [*u, *v])
            .collect()
    }

    pub fn from_interleaved(w: &[f64]) -> Self {
        let u = w.iter().step_by(2).copied().collect();
        let v = w.iter().skip(1).step_by(2).copied().collect();
        FieldPair { u, v }
    }
}

/// Time, proposed step size, mesh and fields at an accepted time level.
#[derive(Clone, Debug)]
pub struct State {
    pub t: f64,
    pub dt: f64,
    pub mesh: Mesh,
    pub fields: FieldPair,
}

/// Parameters of one travelling soliton.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolitonParams {
    /// Amplitude parameter, `a > 0`.
    pub a: f64,
    /// Speed.
    pub c: f64,
    /// Centre at `t = 0`.
    pub x0: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    SingleSoliton {
        a: f64,
        c: f64,
        x0: f64,
    },
    TwoSoliton {
        a1: f64,
        c1: f64,
        x01: f64,
        a2: f64,
        c2: f64,
        x02: f64,
    },
    /// `psi_0 = sech x`; a bound state of solitons when `q = 2 N_s^2`.
    Sech,
    /// `psi_0 = 0`, the trivial stationary solution.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Nonlinearity coefficient (focusing, `q > 0`).
    pub q: f64,
    pub x_l: f64,
    pub x_r: f64,
    /// Final time.
    pub t_final: f64,
    pub initial_condition: InitialCondition,
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0) {
            return Err(Error::config(
                "problem.q",
                "must be positive (focusing case)",
            ));
        }
        if !(self.x_l < self.x_r) {
            return Err(Error::config("problem.x_r", "domain needs x_l < x_r"));
        }
        if !(self.t_final >= 0.0) {
            return Err(Error::config("problem.t_final", "must be non-negative"));
        }
        match self.initial_condition {
            InitialCondition::SingleSoliton { a, .. } if !(a > 0.0) => Err(Error::config(
                "problem.initial_condition.a",
                "must be positive",
            )),
            InitialCondition::TwoSoliton { a1, a2, .. } if !(a1 > 0.0 && a2 > 0.0) => {
                Err(Error::config(
                    "problem.initial_condition.a1",
                    "amplitudes must be positive",
                ))
            }
            _ => Ok(()),
        }
    }

    /// The analytic solution, when the initial condition is a single soliton.
    pub fn exact_soliton(&self) -> Option<SolitonParams> {
        match self.initial_condition {
            InitialCondition::SingleSoliton { a, c, x0 } => Some(SolitonParams { a, c, x0 }),
            _ => None,
        }
    }
}
