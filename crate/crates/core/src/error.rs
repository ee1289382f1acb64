use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A mesh update produced a non-positive cell width.
    #[error("mesh tangled: cell {cell} has width {width:e}")]
    MeshTangled { cell: usize, width: f64 },

    #[error("de Boor equidistribution did not converge in {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("Newton iteration did not converge in {iterations} iterations (last update {last_update:e})")]
    NewtonDiverged { iterations: usize, last_update: f64 },

    #[error("singular Jacobian: zero pivot in row {row}")]
    SingularJacobian { row: usize },

    #[error("step size underflow at t = {t}: dt = {dt:e} after {halvings} halvings")]
    StepsizeUnderflow { t: f64, dt: f64, halvings: usize },

    #[error("initialisation failed: eta band not met after {iterations} iterations (N = {n}, eta = {eta:e})")]
    InitialisationFailed {
        iterations: usize,
        n: usize,
        eta: f64,
    },

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMesh(_) => "invalid_mesh",
            Error::MeshTangled { .. } => "mesh_tangled",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NewtonDiverged { .. } => "newton_diverged",
            Error::SingularJacobian { .. } => "singular_jacobian",
            Error::StepsizeUnderflow { .. } => "stepsize_underflow",
            Error::InitialisationFailed { .. } => "initialisation_failed",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
