//! hr-adaptive moving mesh solver for the one-dimensional cubic nonlinear
//! Schrodinger equation `i psi_t + psi_xx + q |psi|^2 psi = 0`.
//!
//! The solver couples three kinds of adaptivity:
//!
//! * node movement driven by a moving mesh PDE with a curvature monitor
//!   ([`monitor`], [`mmpde`]),
//! * node-count control from a global difficulty indicator ([`refinement`]),
//! * SDIRK2 time stepping with embedded error and mesh-convergence step
//!   control ([`integrator`]).
//!
//! [`driver`] runs the coupled loop and [`harness`] provides presets,
//! configuration files and result output.

pub mod driver;
pub mod error;
pub mod harness;
pub mod integrator;
pub mod linalg;
pub mod mesh;
pub mod mmpde;
pub mod monitor;
pub mod physics;
pub mod refinement;
pub mod state;

pub use driver::{run, Mode, RunConfig, RunCounters, RunResult};
pub use error::{Error, Result};
pub use mesh::Mesh;
pub use state::{FieldPair, InitialCondition, ProblemConfig, SolitonParams, State};
