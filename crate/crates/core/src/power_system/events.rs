//! The staged contingency: disturbance, short circuit, line trip.

use super::system::{Disturbance, ReducedSystem};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageLabel {
    PreDisturbance,
    Disturbance,
    ShortCircuit,
    PostTrip,
}

impl StageLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StageLabel::PreDisturbance => "pre_disturbance",
            StageLabel::Disturbance => "disturbance",
            StageLabel::ShortCircuit => "short_circuit",
            StageLabel::PostTrip => "post_trip",
        }
    }
}

#[derive(Debug, Clone)]
pub struct EventStage {
    pub label: StageLabel,
    pub system: ReducedSystem,
    pub disturbance: Disturbance,
    /// Stage length in seconds; `None` for the open-ended last stage.
    pub duration: Option<f64>,
}

/// Disturbance stage (settling), short circuit at the fault bus, and the
/// post-trip system with the tripped circuit's reactance doubled.
/// The network after the line trip, whose dynamics the approximators learn.
pub fn post_trip_system(sys_base: &ReducedSystem) -> Result<ReducedSystem> {
    let ev = sys_base.events();
    sys_base.with_line_scaled(ev.trip_line, 2.0)
}

pub fn build_event_stages(sys_base: &ReducedSystem, u: Disturbance) -> Result<Vec<EventStage>> {
    let ev = sys_base.events().clone();
    let faulted = sys_base.with_voltage(ev.fault_bus, 0.0)?;
    let tripped = post_trip_system(sys_base)?;
    Ok(vec![
        EventStage {
            label: StageLabel::Disturbance,
            system: sys_base.clone(),
            disturbance: u,
            duration: Some(ev.settle_s),
        },
        EventStage {
            label: StageLabel::ShortCircuit,
            system: faulted,
            disturbance: u,
            duration: Some(ev.fault_s),
        },
        EventStage {
            label: StageLabel::PostTrip,
            system: tripped,
            disturbance: u,
            duration: None,
        },
    ])
}

/// Absolute stage start times, relative to the disturbance.
pub fn stage_boundaries(stages: &[EventStage]) -> Vec<f64> {
    let mut t = 0.0;
    let mut out = vec![0.0];
    for s in stages {
        if let Some(d) = s.duration {
            t += d;
            out.push(t);
        }
    }
    out
}
