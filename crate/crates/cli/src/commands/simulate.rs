use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use swingpinn::dataset::{axis, simulate_scenario_with, Placement, REFERENCE_TOLERANCE};
use swingpinn::evaluation::state_names;
use swingpinn::ode_solver::SolverSettings;
use swingpinn::power_system::DISTURBANCE_RANGE;

use crate::common::{parse_positive, Context};
use crate::error::{CliError, Result};

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Load increase at bus 7 in pu, within [0, 6].
    #[arg(long, value_parser = parse_dp7, allow_negative_numbers = true)]
    pub dp7: f64,
    /// Length of the sampled window after fault clearing, in seconds.
    #[arg(long, default_value_t = 2.0, value_parser = parse_positive)]
    pub t_end: f64,
    /// Sampling interval in seconds.
    #[arg(long, default_value_t = 0.001, value_parser = parse_positive)]
    pub dt: f64,
    /// Relative and absolute tolerance of the integrator.
    #[arg(long, default_value_t = REFERENCE_TOLERANCE, value_parser = parse_positive)]
    pub rtol: f64,
    /// Output CSV file; standard output if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_dp7(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    let (lo, hi) = DISTURBANCE_RANGE;
    if !(lo..=hi).contains(&v) {
        return Err(format!("dP7 = {v} pu is outside the disturbance range [{lo}, {hi}]"));
    }
    Ok(v)
}

/// Sample count of `[0, t_end]` at spacing `dt`, if `dt` divides it.
fn sample_count(t_end: f64, dt: f64) -> Option<usize> {
    let steps = (t_end / dt).round();
    ((steps * dt - t_end).abs() <= 1e-9 * t_end.max(1.0) && steps >= 1.0).then_some(steps as usize + 1)
}

pub fn run(ctx: &Context, args: &SimulateArgs) -> Result<()> {
    let n = sample_count(args.t_end, args.dt)
        .ok_or_else(|| CliError::usage(format!("--dt {} does not divide --t-end {}", args.dt, args.t_end)))?;
    let times = axis(n, (0.0, args.t_end), Placement::Endpoints);
    let rec = simulate_scenario_with(&ctx.system, args.dp7, &times, &SolverSettings::with_tolerance(args.rtol))?;

    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::io(p, e))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let where_ = args.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    let fail = |e: csv::Error| CliError::io(&where_, e);
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["t".to_string()];
    header.extend(state_names(rec.states.ncols()));
    w.write_record(&header).map_err(fail)?;
    for (t, row) in rec.times.iter().zip(rec.states.rows()) {
        let mut line = vec![t.to_string()];
        line.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&line).map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::io(&where_, e))
}
