use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use log::info;
use serde::Serialize;
use swingpinn::dataset::{GenerationReport, GridSpec};

use crate::common::{claim_dir, default_database, write_json, Context, StageOpts, TestGrid, CONFIG, SUMMARY};
use crate::error::Result;

#[derive(Args, Debug, Clone)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub stage: StageOpts,
    /// Number of training disturbances.
    #[arg(long, default_value_t = 5)]
    pub np: usize,
    /// Number of training instants per disturbance.
    #[arg(long, default_value_t = 9)]
    pub nt: usize,
    /// Test grid to label alongside the training grid.
    #[arg(long, value_enum, default_value_t = TestGrid::Small)]
    pub grid: TestGrid,
    /// Trajectory database directory [default: <out>/gen-data/database].
    #[arg(long)]
    pub database: Option<PathBuf>,
}

#[derive(Serialize)]
struct Summary {
    database: PathBuf,
    database_hash: String,
    training_grid: GridSpec,
    test_grid: GridSpec,
    rows: usize,
    generation: GenerationReport,
    seconds: f64,
}

pub fn run(ctx: &Context, args: &GenDataArgs) -> Result<()> {
    let dir = args.stage.out.join("gen-data");
    claim_dir(&dir, args.stage.resume)?;
    let db_path = args.database.clone().unwrap_or_else(|| default_database(&args.stage.out));
    let training = GridSpec::new(args.np, args.nt)?;
    let test = args.grid.spec();
    write_json(
        &dir.join(CONFIG),
        &serde_json::json!({
            "database": db_path,
            "training_grid": training,
            "test_grid": test,
            "system_file": ctx.system_path,
            "system": ctx.system_json()?,
        }),
    )?;

    let start = Instant::now();
    let mut db = ctx.open_database(&db_path)?;
    let mut rows = db.rows_of(&training.dp7_values())?;
    rows.extend(db.rows_of(&test.dp7_values())?);
    rows.sort_unstable();
    rows.dedup();
    let generation = db.ensure_rows(&rows)?;
    info!(
        "{} trajectories: {} simulated, {} reused, {} failed",
        rows.len(),
        generation.simulated,
        generation.reused,
        generation.failed
    );
    write_json(
        &dir.join(SUMMARY),
        &Summary {
            database: db_path,
            database_hash: db.hash().to_string(),
            training_grid: training,
            test_grid: test,
            rows: rows.len(),
            generation,
            seconds: start.elapsed().as_secs_f64(),
        },
    )
}
