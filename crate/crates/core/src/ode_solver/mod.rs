//! Adaptive explicit Runge-Kutta integration with dense output.

mod dopri5;

pub use dopri5::{integrate_adaptive, DenseTrajectory, SolverSettings};
