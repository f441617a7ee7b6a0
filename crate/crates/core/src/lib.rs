//! Physics-informed neural networks for post-fault trajectories of the
//! two-area power system, together with the adaptive Runge-Kutta baseline
//! they are compared against.

pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod mlp;
pub mod ode_solver;
pub mod parallel;
pub mod power_system;
pub mod training;

pub use error::{Error, Result};
