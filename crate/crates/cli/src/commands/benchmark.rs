use std::path::PathBuf;

use clap::Args;
use log::info;
use serde::Serialize;
use swingpinn::evaluation::{timing_benchmark, Method, TimingSettings};
use swingpinn::mlp::{init_params, Checkpoint, NetworkConfig, Normalization};

use crate::common::{claim_dir, parse_positive, write_json, Context, StageOpts, CONFIG, SUMMARY};
use crate::error::Result;

pub const TIMING_CSV: &str = "timing.csv";
pub const TIMING_JSON: &str = "timing.json";

#[derive(Args, Debug, Clone, Default)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub stage: StageOpts,
    /// Checkpoint timed as the default network; an untrained 2x150 network if omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Shorter measurements (10 ms per cell instead of 50 ms).
    #[arg(long)]
    pub quick: bool,
    /// Minimum wall time per measurement in seconds; overrides --quick.
    #[arg(long, value_parser = parse_positive)]
    pub min_seconds: Option<f64>,
}

#[derive(Serialize)]
struct NetworkEntry {
    label: String,
    layers: usize,
    width: usize,
    n_params: usize,
}

#[derive(Serialize)]
struct HorizonSummary {
    horizon: f64,
    rk45_rtol_1e9: Option<f64>,
    nn_default: Option<f64>,
    speedup_vs_rtol_1e9: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    horizons: Vec<HorizonSummary>,
    /// Largest over smallest per-point time of each network across horizons.
    nn_spread: Vec<(String, f64)>,
}

/// The default network and its wider and deeper variants. Timing does not
/// depend on weight values, so the variants are freshly initialised.
fn networks(base: Option<Checkpoint>) -> Result<Vec<(String, Checkpoint)>> {
    let base = match base {
        Some(c) => c,
        None => {
            let config = NetworkConfig::default();
            Checkpoint {
                config,
                normalization: Normalization::identity(config.input_dim, config.output_dim),
                seed: 0,
                epoch: 0,
                params: init_params(&config, 0)?,
            }
        }
    };
    let vary = |config: NetworkConfig| -> Result<Checkpoint> {
        Ok(Checkpoint {
            config,
            params: init_params(&config, 0)?,
            ..base.clone()
        })
    };
    let c = base.config;
    let wider = vary(NetworkConfig {
        width: 2 * c.width,
        ..c
    })?;
    let deeper = vary(NetworkConfig {
        n_hidden_layers: 2 * c.n_hidden_layers,
        ..c
    })?;
    Ok(vec![
        ("default".to_string(), base),
        ("wider".to_string(), wider),
        ("deeper".to_string(), deeper),
    ])
}

pub fn run(ctx: &Context, args: &BenchmarkArgs) -> Result<()> {
    let dir = args.stage.out.join("benchmark");
    claim_dir(&dir, args.stage.resume)?;
    let mut settings = TimingSettings::default();
    if args.quick {
        settings.min_seconds = 0.01;
    }
    if let Some(s) = args.min_seconds {
        settings.min_seconds = s;
    }
    let base = args.checkpoint.as_ref().map(Checkpoint::load).transpose()?;
    let nets = networks(base)?;
    write_json(
        &dir.join(CONFIG),
        &serde_json::json!({
            "settings": settings,
            "checkpoint": args.checkpoint,
            "networks": nets.iter().map(|(l, c)| NetworkEntry {
                label: l.clone(),
                layers: c.config.n_hidden_layers,
                width: c.config.width,
                n_params: c.config.n_params(),
            }).collect::<Vec<_>>(),
            "system_file": ctx.system_path,
        }),
    )?;

    info!("timing {} horizons", settings.horizons.len());
    let report = timing_benchmark(&ctx.system, &nets, &settings)?;
    report.write_csv(dir.join(TIMING_CSV))?;
    write_json(&dir.join(TIMING_JSON), &report)?;
    write_json(&dir.join("environment.json"), &report.environment)?;

    let horizons = report
        .horizons()
        .into_iter()
        .map(|h| {
            let rk = report.seconds_per_point(Method::Rk45, "rtol=1e-9", h);
            let nn = report.seconds_per_point(Method::Nn, "default", h);
            HorizonSummary {
                horizon: h,
                rk45_rtol_1e9: rk,
                nn_default: nn,
                speedup_vs_rtol_1e9: rk.zip(nn).map(|(r, n)| r / n),
            }
        })
        .collect();
    let nn_spread = nets
        .iter()
        .map(|(label, _)| {
            let t: Vec<f64> = report
                .rows
                .iter()
                .filter(|r| r.method == Method::Nn && &r.variant == label)
                .map(|r| r.seconds_per_point)
                .collect();
            let max = t.iter().copied().fold(f64::MIN, f64::max);
            let min = t.iter().copied().fold(f64::MAX, f64::min);
            (label.clone(), max / min)
        })
        .collect();
    write_json(&dir.join(SUMMARY), &Summary { horizons, nn_spread })
}
