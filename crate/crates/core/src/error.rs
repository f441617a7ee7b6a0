use std::path::PathBuf;

use thiserror::Error;

use crate::ode_solver::DenseTrajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite {what}[{index}] = {value}")]
    NonFinite {
        what: &'static str,
        index: usize,
        value: f64,
    },

    #[error("singular eliminated-bus block ({0}); isolated or degenerate bus group")]
    SingularNetwork(String),

    #[error("no equilibrium after {iterations} Newton iterations, residual {residual:.3e}")]
    NoEquilibrium { iterations: usize, residual: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: IntegrationFailure,
        partial: Box<DenseTrajectory>,
    },

    #[error("time {t} outside integrated span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },

    #[error("scenario dP7 = {dp7} pu: {source}")]
    Scenario {
        dp7: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("grid not representable on stored granularity: {0}")]
    Alignment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss diverged: non-finite {term} term for state {state}")]
    Divergence { term: &'static str, state: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationFailure {
    MaxSteps,
    StepUnderflow,
    NonFiniteState,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IntegrationFailure::MaxSteps => "maximum number of steps exceeded",
            IntegrationFailure::StepUnderflow => "step size underflow",
            IntegrationFailure::NonFiniteState => "non-finite state",
        })
    }
}

impl Error {
    /// Module that raised the error, used for the CLI's `E:<module>:<reason>` lines.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::SingularNetwork(_) | Error::NoEquilibrium { .. } => {
                "power_system"
            }
            Error::NonFinite { .. } => "power_system",
            Error::Integration { .. } | Error::OutOfSpan { .. } => "ode_solver",
            Error::Scenario { .. } | Error::Alignment(_) => "dataset",
            Error::Shape(_) => "mlp",
            Error::Divergence { .. } => "training",
            Error::Io { .. } | Error::Format { .. } | Error::Json(_) => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
