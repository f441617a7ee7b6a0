use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ode_solver::{integrate_adaptive, DenseTrajectory, SolverSettings};
use crate::power_system::{
    build_event_stages, equilibrium_solve, Disturbance, ReducedSystem, SystemState,
};

/// Label tolerance for training, validation and test data.
pub const REFERENCE_TOLERANCE: f64 = 1e-9;

/// One disturbance's post-trip trajectory, re-timed so that `t = 0` is the
/// clearing instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub dp7: f64,
    /// State at the clearing instant (end of the short-circuit stage).
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
    /// One row per entry of `times`.
    pub states: Array2<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Dense post-trip solution of one scenario plus the pre-fault history.
#[derive(Debug, Clone)]
pub struct ScenarioSolution {
    pub dp7: f64,
    pub equilibrium: SystemState,
    /// End state of the settling stage (fault inception).
    pub pre_fault: Vec<f64>,
    /// End state of the fault stage.
    pub clearing: Vec<f64>,
    pub post_trip: DenseTrajectory,
}

fn attach(dp7: f64) -> impl Fn(Error) -> Error {
    move |e| Error::Scenario {
        dp7,
        source: Box::new(e),
    }
}

/// Runs the full contingency for one disturbance and integrates the
/// post-trip stage up to `horizon` seconds after clearing.
pub fn solve_scenario(
    base: &ReducedSystem,
    dp7: f64,
    horizon: f64,
    settings: &SolverSettings,
) -> Result<ScenarioSolution> {
    let wrap = attach(dp7);
    let u = Disturbance::new(dp7).map_err(&wrap)?;
    let stages = build_event_stages(base, u).map_err(&wrap)?;

    let eq = settled_equilibrium(&stages[0].system, u).map_err(&wrap)?;
    let mut x = eq.to_vec();
    let mut pre_fault = Vec::new();
    for stage in &stages[..2] {
        let sys = &stage.system;
        let d = stage.duration.expect("closed stage");
        let traj = integrate_adaptive(
            |_, x, dx| sys.rhs_into(x, stage.disturbance, dx),
            &x,
            (0.0, d),
            settings,
        )
        .map_err(&wrap)?;
        x = traj.last_state().to_vec();
        if pre_fault.is_empty() {
            pre_fault = x.clone();
        }
    }
    let post = &stages[2];
    let traj = integrate_adaptive(
        |_, x, dx| post.system.rhs_into(x, post.disturbance, dx),
        &x,
        (0.0, horizon),
        settings,
    )
    .map_err(&wrap)?;
    Ok(ScenarioSolution {
        dp7,
        equilibrium: eq,
        pre_fault,
        clearing: x,
        post_trip: traj,
    })
}

/// Newton from a flat start, falling back to continuation in the
/// disturbance when the flat start is outside the basin.
fn settled_equilibrium(sys: &ReducedSystem, u: Disturbance) -> Result<SystemState> {
    let flat = SystemState::flat(sys);
    match equilibrium_solve(sys, u, &flat) {
        Ok(eq) => Ok(eq),
        Err(first) => {
            const STEPS: usize = 16;
            let mut x = flat;
            for k in 1..=STEPS {
                let uk = Disturbance::unchecked(u.value() * k as f64 / STEPS as f64);
                x = equilibrium_solve(sys, uk, &x).map_err(|_| first_clone(&first))?;
            }
            Ok(x)
        }
    }
}

fn first_clone(e: &Error) -> Error {
    match e {
        Error::NoEquilibrium { iterations, residual } => Error::NoEquilibrium {
            iterations: *iterations,
            residual: *residual,
        },
        other => Error::Config(other.to_string()),
    }
}

/// Simulates one scenario at the reference tolerance and samples the
/// post-trip trajectory at `sample_times` (seconds after clearing).
pub fn simulate_scenario(
    base: &ReducedSystem,
    dp7: f64,
    sample_times: &[f64],
) -> Result<TrajectoryRecord> {
    simulate_scenario_with(base, dp7, sample_times, &SolverSettings::with_tolerance(REFERENCE_TOLERANCE))
}

pub fn simulate_scenario_with(
    base: &ReducedSystem,
    dp7: f64,
    sample_times: &[f64],
    settings: &SolverSettings,
) -> Result<TrajectoryRecord> {
    let wrap = attach(dp7);
    if sample_times.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(wrap(Error::Config("sample times must be strictly increasing".into())));
    }
    let horizon = sample_times.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    if sample_times.first().is_some_and(|&t| t < 0.0) {
        return Err(wrap(Error::Config("sample times before clearing".into())));
    }
    let sol = solve_scenario(base, dp7, horizon, settings)?;
    let states = sol.post_trip.sample(sample_times).map_err(&wrap)?;
    Ok(TrajectoryRecord {
        dp7,
        x0: sol.clearing,
        times: sample_times.to_vec(),
        states,
    })
}
