use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;
use swingpinn::dataset::GridSpec;
use swingpinn::training::LossMode;

use super::benchmark::{self, BenchmarkArgs};
use super::evaluate::{self, EvaluateArgs};
use super::gen_data::{self, GenDataArgs};
use super::report::{self, ReportArgs};
use super::train::{self, TrainArgs, CHECKPOINT};
use crate::common::{default_database, file_sha256, parse_mode, write_json, Context, StageOpts, TestGrid};
use crate::error::{CliError, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Root of the experiment output tree.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Number of seeds per mode; seeds are 0, 1, ...
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    /// Loss modes to train, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "nn,dtnn,pinn")]
    pub modes: Vec<LossMode>,
    /// Number of training disturbances.
    #[arg(long, default_value_t = 5)]
    pub np: usize,
    /// Number of training instants per disturbance.
    #[arg(long, default_value_t = 9)]
    pub nt: usize,
    /// Maximum number of epochs per run.
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Hidden layers.
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    /// Neurons per hidden layer.
    #[arg(long, default_value_t = 150)]
    pub width: usize,
    /// Test grid.
    #[arg(long, value_enum, default_value_t = TestGrid::Small)]
    pub grid: TestGrid,
    /// Leave out the timing benchmark.
    #[arg(long)]
    pub skip_benchmark: bool,
    /// Shorter timing measurements.
    #[arg(long)]
    pub quick_benchmark: bool,
    /// Continue in an existing output tree, reusing finished training runs.
    #[arg(long)]
    pub resume: bool,
    /// Write gnuplot scripts with the report.
    #[arg(long)]
    pub gnuplot: bool,
}

#[derive(Serialize)]
struct DatasetSpec {
    training: GridSpec,
    test: GridSpec,
}

/// What a pipeline run was asked to do, with hashes of its inputs.
#[derive(Serialize)]
struct ExperimentManifest {
    system_file: Option<PathBuf>,
    system_file_sha256: Option<String>,
    system_sha256: String,
    seeds: Vec<u64>,
    modes: Vec<LossMode>,
    dataset: DatasetSpec,
    network: train::NetworkShape,
    epochs: usize,
    output: PathBuf,
    database: PathBuf,
    benchmark: bool,
}

pub fn run(ctx: &Context, args: &PipelineArgs) -> Result<()> {
    let manifest_path = args.out.join(MANIFEST);
    if manifest_path.exists() && !args.resume {
        return Err(CliError::cli(format!(
            "{} already holds a pipeline run; pass --resume to continue it",
            args.out.display()
        )));
    }
    if args.modes.is_empty() || args.seeds == 0 {
        return Err(CliError::usage("need at least one mode and one seed"));
    }
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let manifest = ExperimentManifest {
        system_file: ctx.system_path.clone(),
        system_file_sha256: ctx.system_path.as_deref().map(file_sha256).transpose()?,
        system_sha256: ctx.system_hash(),
        seeds: seeds.clone(),
        modes: args.modes.clone(),
        dataset: DatasetSpec {
            training: GridSpec::new(args.np, args.nt)?,
            test: args.grid.spec(),
        },
        network: train::NetworkShape {
            layers: args.layers,
            width: args.width,
        },
        epochs: args.epochs,
        output: args.out.clone(),
        database: default_database(&args.out),
        benchmark: !args.skip_benchmark,
    };
    write_json(&manifest_path, &manifest)?;

    let stage = StageOpts {
        out: args.out.clone(),
        resume: args.resume,
    };
    info!("stage gen-data");
    gen_data::run(
        ctx,
        &GenDataArgs {
            stage: stage.clone(),
            np: args.np,
            nt: args.nt,
            grid: args.grid,
            database: None,
        },
    )?;

    let mut checkpoints = Vec::new();
    for &mode in &args.modes {
        for &seed in &seeds {
            info!("stage train: {mode} seed {seed}");
            let dir = train::run(
                ctx,
                &TrainArgs {
                    stage: stage.clone(),
                    mode: Some(mode),
                    np: Some(args.np),
                    nt: Some(args.nt),
                    seed: Some(seed),
                    epochs: Some(args.epochs),
                    layers: Some(args.layers),
                    width: Some(args.width),
                    ..TrainArgs::default()
                },
            )?;
            checkpoints.push(dir.join(CHECKPOINT));
        }
    }

    info!("stage evaluate");
    evaluate::run(
        ctx,
        &EvaluateArgs {
            stage: stage.clone(),
            checkpoint: checkpoints.clone(),
            grid: args.grid,
            ..EvaluateArgs::default()
        },
    )?;

    if !args.skip_benchmark {
        info!("stage benchmark");
        let default = args
            .modes
            .contains(&LossMode::Pinn)
            .then(|| train::run_dir(&args.out, LossMode::Pinn, 0).join(CHECKPOINT))
            .or_else(|| checkpoints.first().cloned());
        benchmark::run(
            ctx,
            &BenchmarkArgs {
                stage: stage.clone(),
                checkpoint: default,
                quick: args.quick_benchmark,
                min_seconds: None,
            },
        )?;
    }

    info!("stage report");
    report::run(&ReportArgs {
        stage,
        gnuplot: args.gnuplot,
    })
}
