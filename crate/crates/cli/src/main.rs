//! `swingpinn`: simulate the two-area system, build trajectory databases,
//! train and evaluate the three network variants, and time them against
//! the solver.

mod commands;
mod common;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::benchmark::BenchmarkArgs;
use commands::evaluate::EvaluateArgs;
use commands::gen_data::GenDataArgs;
use commands::pipeline::PipelineArgs;
use commands::report::ReportArgs;
use commands::simulate::SimulateArgs;
use commands::train::TrainArgs;
use common::Context;
use error::Result;

#[derive(Parser, Debug)]
#[command(name = "swingpinn", version, about = "Physics-informed networks for two-area power system transients")]
#[command(after_help = "Worker pools are capped by SWINGPINN_THREADS; log level is set with RUST_LOG.")]
struct Cli {
    /// System description (JSON); the built-in two-area system if omitted.
    #[arg(long, global = true)]
    system: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one contingency and write the post-trip trajectory as CSV.
    Simulate(SimulateArgs),
    /// Simulate the training and test trajectories into the database.
    GenData(GenDataArgs),
    /// Train one network.
    Train(TrainArgs),
    /// Test-set accuracy, error bands and the critical-trajectory share.
    Evaluate(EvaluateArgs),
    /// Time network evaluation against the solver.
    Benchmark(BenchmarkArgs),
    /// Aggregate stage outputs into summary tables.
    Report(ReportArgs),
    /// gen-data, train for every mode and seed, evaluate, benchmark, report.
    Pipeline(PipelineArgs),
}

fn run(cli: Cli) -> Result<()> {
    let ctx = || Context::load(cli.system.as_deref());
    match &cli.command {
        Command::Simulate(a) => commands::simulate::run(&ctx()?, a),
        Command::GenData(a) => commands::gen_data::run(&ctx()?, a),
        Command::Train(a) => commands::train::run(&ctx()?, a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate::run(&ctx()?, a),
        Command::Benchmark(a) => commands::benchmark::run(&ctx()?, a),
        Command::Report(a) => commands::report::run(a),
        Command::Pipeline(a) => commands::pipeline::run(&ctx()?, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
