use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use log::info;
use serde::{Deserialize, Serialize};
use swingpinn::dataset::{select_training_subset, validation_grid, CollocationGrid, GridSpec};
use swingpinn::mlp::NetworkConfig;
use swingpinn::power_system::post_trip_system;
use swingpinn::training::{train, LossMode, StopReason, TrainSettings, TrainingData};

use crate::common::{
    claim_dir, default_database, parse_mode, read_json, write_json, Context, StageOpts, CONFIG, SUMMARY,
};
use crate::error::{CliError, Result};

pub const REPORT: &str = "train_report.csv";
pub const CHECKPOINT: &str = "checkpoint.swpn";

#[derive(Args, Debug, Clone, Default)]
pub struct TrainArgs {
    #[command(flatten)]
    pub stage: StageOpts,
    /// Loss formulation: nn, dtnn or pinn [default: pinn].
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<LossMode>,
    /// Number of training disturbances [default: 5].
    #[arg(long)]
    pub np: Option<usize>,
    /// Number of training instants per disturbance [default: 9].
    #[arg(long)]
    pub nt: Option<usize>,
    /// Seed of the weight initialisation [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of epochs [default: 1000].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Epochs without a new best validation loss before stopping [default: 200].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Initial learning rate [default: 0.025].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Hidden layers [default: 2].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Neurons per hidden layer [default: 150].
    #[arg(long)]
    pub width: Option<usize>,
    /// JSON run configuration; explicit flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trajectory database directory [default: <out>/gen-data/database].
    #[arg(long)]
    pub database: Option<PathBuf>,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub layers: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataShape {
    pub np: usize,
    pub nt: usize,
}

/// Everything that determines a training run. Written to `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub training: TrainSettings,
    pub network: NetworkShape,
    pub data: DataShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let net = NetworkConfig::default();
        Self {
            training: TrainSettings::default(),
            network: NetworkShape {
                layers: net.n_hidden_layers,
                width: net.width,
            },
            data: DataShape { np: 5, nt: 9 },
        }
    }
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(p) => read_json::<TrainConfig>(p)?,
            None => TrainConfig::default(),
        };
        let t = &mut c.training;
        t.mode = self.mode.unwrap_or(t.mode);
        t.seed = self.seed.unwrap_or(t.seed);
        t.max_epochs = self.epochs.unwrap_or(t.max_epochs);
        t.patience = self.patience.unwrap_or(t.patience);
        t.lr_init = self.lr.unwrap_or(t.lr_init);
        c.network.layers = self.layers.unwrap_or(c.network.layers);
        c.network.width = self.width.unwrap_or(c.network.width);
        c.data.np = self.np.unwrap_or(c.data.np);
        c.data.nt = self.nt.unwrap_or(c.data.nt);
        c.training.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(c)
    }
}

pub fn run_dir(out: &Path, mode: LossMode, seed: u64) -> PathBuf {
    out.join("train").join(format!("{mode}-seed{seed}"))
}

/// Written to `summary.json` next to the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub mode: LossMode,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_validation: f64,
    pub stop_reason: StopReason,
    pub n_x: usize,
    pub n_f: usize,
    pub n_validation: usize,
    pub database_hash: String,
    pub seconds: f64,
}

/// Trains one network, returning its run directory.
pub fn run(ctx: &Context, args: &TrainArgs) -> Result<PathBuf> {
    let cfg = args.resolve()?;
    let s = &cfg.training;
    let dir = run_dir(&args.stage.out, s.mode, s.seed);
    if args.stage.resume && dir.join(SUMMARY).exists() && dir.join(CHECKPOINT).exists() {
        if read_json::<TrainConfig>(&dir.join(CONFIG)).ok().as_ref() == Some(&cfg) {
            info!("{} is up to date", dir.display());
            return Ok(dir);
        }
    }
    claim_dir(&dir, args.stage.resume)?;
    let _ = fs::remove_file(dir.join(SUMMARY));
    write_json(&dir.join(CONFIG), &cfg)?;

    let start = Instant::now();
    let db_path = args.database.clone().unwrap_or_else(|| default_database(&args.stage.out));
    let mut db = ctx.open_database(&db_path)?;
    let data = select_training_subset(&mut db, &GridSpec::new(cfg.data.np, cfg.data.nt)?)?;
    let collocation = CollocationGrid::default();
    let validation = validation_grid(&ctx.system)?;
    let post = post_trip_system(&ctx.system)?;
    let net = NetworkConfig::new(cfg.network.layers, cfg.network.width);
    info!("training {} seed {} on {} points", s.mode, s.seed, data.len());
    let outcome = train(
        s,
        &net,
        TrainingData {
            data: &data,
            collocation: &collocation,
            validation: &validation,
        },
        &post,
    )?;
    let r = &outcome.report;
    info!(
        "{} seed {}: best validation {:.4e} at epoch {} ({:?})",
        s.mode, s.seed, r.best_validation, r.best_epoch, r.stop_reason
    );
    r.write_csv(dir.join(REPORT))?;
    outcome.best.save(dir.join(CHECKPOINT))?;
    write_json(
        &dir.join(SUMMARY),
        &TrainSummary {
            mode: s.mode,
            seed: s.seed,
            epochs: r.epochs.len(),
            best_epoch: r.best_epoch,
            best_validation: r.best_validation,
            stop_reason: r.stop_reason.clone(),
            n_x: data.len(),
            n_f: if s.mode == LossMode::Pinn { collocation.n_f() } else { 0 },
            n_validation: validation.len(),
            database_hash: db.hash().to_string(),
            seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        fs::write(&p, r#"{"training": {"mode": "nn", "max_epochs": 50}, "network": {"layers": 3, "width": 20}}"#)
            .unwrap();
        let args = TrainArgs {
            config: Some(p),
            epochs: Some(7),
            ..TrainArgs::default()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.training.mode, LossMode::Nn);
        assert_eq!(c.training.max_epochs, 7);
        assert_eq!(c.training.patience, 200);
        assert_eq!(c.network, NetworkShape { layers: 3, width: 20 });
        assert_eq!(c.data, DataShape { np: 5, nt: 9 });
    }

    #[test]
    fn invalid_settings_are_usage_errors() {
        let args = TrainArgs {
            lr: Some(-1.0),
            ..TrainArgs::default()
        };
        assert_eq!(args.resolve().unwrap_err().exit_code(), 2);
    }
}
