//! Two-area swing dynamics, Kron reduction, equilibria and event staging.
//!
//! Generators carry two states (angle and frequency); load buses carry a
//! single first-order angle state. The flat state layout is
//! `[delta_gen..., delta_load..., omega_gen...]`, which for the bundled
//! configuration is `[d1, d2, d3, d4, d7, d9, w1, w2, w3, w4]`.

pub mod config;
pub mod equilibrium;
pub mod events;
pub mod network;
mod system;

pub use config::{Balancing, BusKind, SystemConfig};
pub use equilibrium::{equilibrium_solve, EQUILIBRIUM_TOLERANCE};
pub use events::{build_event_stages, post_trip_system, stage_boundaries, EventStage, StageLabel};
pub use network::{kron_reduce, FullNetwork};
pub use system::{swing_rhs, Disturbance, ReducedSystem, SystemState, DISTURBANCE_RANGE};

/// State names of the bundled two-area system in flat-state order.
pub const STATE_NAMES: [&str; 10] = [
    "delta1", "delta2", "delta3", "delta4", "delta7", "delta9", "omega1", "omega2", "omega3",
    "omega4",
];

/// An autonomous ODE right-hand side parameterised by a scalar input, with
/// its cotangent-Jacobian product. The training losses are written against
/// this trait.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn rhs(&self, x: &[f64], u: f64, dx: &mut [f64]);
    fn rhs_vjp(&self, x: &[f64], u: f64, cotangent: &[f64], out: &mut [f64]);
}
