use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::info;
use serde::Serialize;
use swingpinn::dataset::{select_records, select_training_subset, GridSpec};
use swingpinn::evaluation::{
    critical_share, error_bands, screening_pair, test_mse, write_bands_csv, AccuracyReport, BandAxis,
    SeedAccuracy, CRITICAL_SEPARATION,
};
use swingpinn::mlp::Checkpoint;
use swingpinn::training::LossMode;

use super::train::{TrainSummary, CHECKPOINT};
use crate::common::{
    claim_dir, default_database, log_written, parse_mode, read_json, write_json, Context, StageOpts, TestGrid,
    CONFIG, SUMMARY,
};
use crate::error::{CliError, Result};

pub const RUNS: &str = "accuracy_runs.csv";
pub const STATS: &str = "accuracy_stats.csv";
pub const SCREENING: &str = "screening.csv";

#[derive(Args, Debug, Clone, Default)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub stage: StageOpts,
    /// Checkpoints to evaluate [default: every checkpoint under <out>/train].
    #[arg(long, num_args = 1..)]
    pub checkpoint: Vec<PathBuf>,
    /// Test grid.
    #[arg(long, value_enum, default_value_t = TestGrid::Small)]
    pub grid: TestGrid,
    /// Loss mode of the checkpoints, if their run summaries are not alongside.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LossMode>,
    /// Trajectory database directory [default: <out>/gen-data/database].
    #[arg(long)]
    pub database: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunSummary {
    label: String,
    checkpoint: PathBuf,
    mode: LossMode,
    seed: u64,
    epoch: usize,
    mse: Vec<f64>,
}

#[derive(Serialize)]
struct Summary {
    test_grid: GridSpec,
    n_points: usize,
    database_hash: String,
    runs: Vec<RunSummary>,
    terminal_critical_share: Option<f64>,
}

/// Checkpoints of finished runs under `<out>/train`, in directory-name order.
pub fn discover(out: &Path) -> Result<Vec<PathBuf>> {
    let root = out.join("train");
    let entries = fs::read_dir(&root).map_err(|e| CliError::io(&root, e))?;
    let mut found: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path().join(CHECKPOINT))
        .filter(|p| p.is_file())
        .collect();
    found.sort();
    Ok(found)
}

/// Run label and mode of a checkpoint, taken from its run directory.
fn identify(path: &Path, forced: Option<LossMode>) -> Result<(String, LossMode)> {
    let parent = path.parent().unwrap_or(Path::new("."));
    let label = parent
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let mode = match forced {
        Some(m) => m,
        None => {
            let summary = parent.join(SUMMARY);
            if !summary.exists() {
                return Err(CliError::usage(format!(
                    "no {} next to {}; pass --mode",
                    SUMMARY,
                    path.display()
                )));
            }
            read_json::<TrainSummary>(&summary)?.mode
        }
    };
    Ok((label, mode))
}

pub fn run(ctx: &Context, args: &EvaluateArgs) -> Result<()> {
    let checkpoints = if args.checkpoint.is_empty() {
        discover(&args.stage.out)?
    } else {
        args.checkpoint.clone()
    };
    if checkpoints.is_empty() {
        return Err(CliError::usage("no checkpoints to evaluate"));
    }
    let dir = args.stage.out.join("evaluate");
    claim_dir(&dir, args.stage.resume)?;
    let _ = fs::remove_file(dir.join(SUMMARY));
    let bands_dir = dir.join("bands");
    fs::create_dir_all(&bands_dir).map_err(|e| CliError::io(&bands_dir, e))?;
    let spec = args.grid.spec();
    let db_path = args.database.clone().unwrap_or_else(|| default_database(&args.stage.out));
    write_json(
        &dir.join(CONFIG),
        &serde_json::json!({
            "checkpoints": checkpoints,
            "test_grid": spec,
            "mode": args.mode,
            "database": db_path,
            "system_file": ctx.system_path,
        }),
    )?;

    let mut db = ctx.open_database(&db_path)?;
    info!("labelling the {}x{} test grid", spec.n_trajectories, spec.n_points);
    let records = select_records(&mut db, &spec)?;
    let test = select_training_subset(&mut db, &spec)?;

    let mut report = AccuracyReport::default();
    let mut runs = Vec::new();
    for path in &checkpoints {
        let (label, mode) = identify(path, args.mode)?;
        let ckpt = Checkpoint::load(path)?;
        let mse = test_mse(&ckpt, &test)?;
        info!("{label}: MSE delta1 {:.3e}", mse[0]);
        for axis in [BandAxis::Time, BandAxis::Power] {
            let p = bands_dir.join(format!("{label}_{axis}.csv"));
            write_bands_csv(&error_bands(&ckpt, &test, axis)?, &p)?;
        }
        report.push(SeedAccuracy {
            mode,
            seed: ckpt.seed,
            mse: mse.clone(),
        });
        runs.push(RunSummary {
            label,
            checkpoint: path.clone(),
            mode,
            seed: ckpt.seed,
            epoch: ckpt.epoch,
            mse,
        });
    }
    report.write_runs_csv(dir.join(RUNS))?;
    report.write_stats_csv(dir.join(STATS))?;
    log_written(&dir.join(RUNS));

    let share = critical_share(&records, screening_pair(&ctx.system)?, CRITICAL_SEPARATION)?;
    share.write_csv(dir.join(SCREENING))?;
    write_json(
        &dir.join(SUMMARY),
        &Summary {
            test_grid: spec,
            n_points: test.len(),
            database_hash: db.hash().to_string(),
            runs,
            terminal_critical_share: share.terminal(),
        },
    )
}
