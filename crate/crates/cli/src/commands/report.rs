use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use log::{info, warn};
use serde::Serialize;
use swingpinn::evaluation::{improvement_after, state_names, AccuracyReport, Method, TimingReport};
use swingpinn::training::{read_epochs_csv, EpochRecord, LossMode};

use super::benchmark::TIMING_JSON;
use super::evaluate::{RUNS, SCREENING};
use super::train::{TrainSummary, REPORT};
use crate::common::{claim_dir, log_written, read_json, write_json, StageOpts, SUMMARY};
use crate::error::{CliError, Result};

/// Epoch against which later validation improvement is measured.
pub const PIVOT_EPOCH: usize = 200;

#[derive(Args, Debug, Clone, Default)]
pub struct ReportArgs {
    #[command(flatten)]
    pub stage: StageOpts,
    /// Also write gnuplot scripts for every table.
    #[arg(long)]
    pub gnuplot: bool,
}

struct Run {
    summary: TrainSummary,
    epochs: Vec<EpochRecord>,
}

#[derive(Serialize)]
struct ModeValidation {
    runs: usize,
    median_improvement_after_pivot: Option<f64>,
    improvements: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Summary {
    runs_per_mode: BTreeMap<String, usize>,
    median_mse: BTreeMap<String, BTreeMap<String, f64>>,
    pivot_epoch: usize,
    validation: BTreeMap<String, ModeValidation>,
    speedup_vs_rtol_1e9: Vec<(f64, f64)>,
}

fn csv_fail(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

fn load_runs(out: &Path) -> Result<Vec<Run>> {
    let root = out.join("train");
    if !root.is_dir() {
        return Ok(Vec::new());
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
        .map_err(|e| CliError::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(SUMMARY).is_file() && p.join(REPORT).is_file())
        .collect();
    dirs.sort();
    let mut runs = dirs
        .iter()
        .map(|d| {
            Ok(Run {
                summary: read_json(&d.join(SUMMARY))?,
                epochs: read_epochs_csv(d.join(REPORT))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (mode_rank(r.summary.mode), r.summary.seed));
    Ok(runs)
}

fn mode_rank(m: LossMode) -> usize {
    LossMode::ALL.iter().position(|&x| x == m).unwrap_or(usize::MAX)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn write_validation(runs: &[Run], dir: &Path) -> Result<BTreeMap<String, ModeValidation>> {
    let p = dir.join("validation_curves.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_fail(&p))?;
    w.write_record(["mode", "seed", "epoch", "validation"]).map_err(csv_fail(&p))?;
    for r in runs {
        for e in &r.epochs {
            let rec = [r.summary.mode.to_string(), r.summary.seed.to_string(), e.epoch.to_string(), e.validation.to_string()];
            w.write_record(&rec).map_err(csv_fail(&p))?;
        }
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    log_written(&p);

    let p = dir.join("validation_summary.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_fail(&p))?;
    w.write_record([
        "mode",
        "seed",
        "epochs",
        "best_epoch",
        "best_validation",
        "improvement_after_200",
    ])
    .map_err(csv_fail(&p))?;
    let mut by_mode: BTreeMap<String, ModeValidation> = BTreeMap::new();
    for r in runs {
        let s = &r.summary;
        let gain = improvement_after(&r.epochs, PIVOT_EPOCH);
        let rec = [
            s.mode.to_string(),
            s.seed.to_string(),
            s.epochs.to_string(),
            s.best_epoch.to_string(),
            s.best_validation.to_string(),
            gain.map_or(String::new(), |g| g.to_string()),
        ];
        w.write_record(&rec).map_err(csv_fail(&p))?;
        let m = by_mode.entry(s.mode.to_string()).or_insert(ModeValidation {
            runs: 0,
            median_improvement_after_pivot: None,
            improvements: Vec::new(),
        });
        m.runs += 1;
        m.improvements.push(gain);
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    for m in by_mode.values_mut() {
        m.median_improvement_after_pivot = median(m.improvements.iter().flatten().copied().collect());
    }
    Ok(by_mode)
}

fn write_timing(report: &TimingReport, dir: &Path) -> Result<Vec<(f64, f64)>> {
    let p = dir.join("timing_summary.csv");
    let mut w = csv::Writer::from_path(&p).map_err(csv_fail(&p))?;
    w.write_record(["horizon", "method", "variant", "seconds_per_point", "repetitions", "ratio_to_default_nn"])
        .map_err(csv_fail(&p))?;
    for r in &report.rows {
        let nn = report.seconds_per_point(Method::Nn, "default", r.horizon);
        let method = match r.method {
            Method::Rk45 => "rk45",
            Method::Nn => "nn",
        };
        let rec = [
            r.horizon.to_string(),
            method.to_string(),
            r.variant.clone(),
            r.seconds_per_point.to_string(),
            r.repetitions.to_string(),
            nn.map_or(String::new(), |n| (r.seconds_per_point / n).to_string()),
        ];
        w.write_record(&rec).map_err(csv_fail(&p))?;
    }
    w.flush().map_err(|e| CliError::io(&p, e))?;
    Ok(report
        .horizons()
        .into_iter()
        .filter_map(|h| report.speedup(h, 1e-9, "default").map(|s| (h, s)))
        .collect())
}

const ACCURACY_GP: &str = r#"set datafile separator ','
set terminal pngcairo size 900,600
set output 'accuracy_delta1.png'
set logscale y
set ylabel 'test MSE delta1 [rad^2]'
set xtics ('nn' 0, 'dtnn' 1, 'pinn' 2)
set style fill empty
mode(s) = s eq 'nn' ? 0 : s eq 'dtnn' ? 1 : 2
plot 'accuracy_stats.csv' using (strcol(2) eq 'delta1' ? mode(strcol(1)) : 1/0):5:7:8:6 \
     with candlesticks whiskerbars notitle, \
     'accuracy_runs.csv' using (mode(strcol(1))):3 with points pt 7 notitle
"#;

const VALIDATION_GP: &str = r#"set datafile separator ','
set terminal pngcairo size 900,600
set output 'validation.png'
set logscale y
set xlabel 'epoch'
set ylabel 'validation loss'
plot for [m in 'nn dtnn pinn'] 'validation_curves.csv' \
     using 3:(strcol(1) eq m ? $4 : 1/0) with dots title m
"#;

const TIMING_GP: &str = r#"set datafile separator ','
set terminal pngcairo size 900,600
set output 'timing.png'
set logscale xy
set xlabel 'horizon [s]'
set ylabel 'seconds per data point'
set key left top
plot for [v in 'rtol=1e-5 rtol=1e-9 rtol=1e-13 default wider deeper'] 'timing_summary.csv' \
     using 1:(strcol(3) eq v ? $4 : 1/0) with linespoints title v
"#;

const SCREENING_GP: &str = r#"set datafile separator ','
set terminal pngcairo size 900,600
set output 'screening.png'
set xlabel 't [s]'
set ylabel 'share of critical trajectories'
set yrange [0:1.05]
plot '../evaluate/screening.csv' using 1:2 with lines notitle
"#;

pub fn run(args: &ReportArgs) -> Result<()> {
    let out = &args.stage.out;
    let dir = out.join("report");
    claim_dir(&dir, args.stage.resume)?;
    let _ = fs::remove_file(dir.join(SUMMARY));

    let mut runs_per_mode = BTreeMap::new();
    let mut median_mse = BTreeMap::new();
    let runs_csv = out.join("evaluate").join(RUNS);
    if runs_csv.is_file() {
        let mut acc = AccuracyReport::read_runs_csv(&runs_csv)?;
        acc.runs.sort_by_key(|r| (mode_rank(r.mode), r.seed));
        acc.write_runs_csv(dir.join(RUNS))?;
        acc.write_stats_csv(dir.join("accuracy_stats.csv"))?;
        let names = state_names(acc.runs.first().map_or(0, |r| r.mse.len()));
        for mode in acc.modes() {
            runs_per_mode.insert(mode.to_string(), acc.runs.iter().filter(|r| r.mode == mode).count());
            let medians = names
                .iter()
                .enumerate()
                .filter_map(|(j, n)| acc.median(mode, j).map(|m| (n.clone(), m)))
                .collect();
            median_mse.insert(mode.to_string(), medians);
        }
        log_written(&dir.join(RUNS));
    } else {
        warn!("no {} yet; accuracy tables skipped", runs_csv.display());
    }

    let runs = load_runs(out)?;
    let validation = write_validation(&runs, &dir)?;

    let timing_json = out.join("benchmark").join(TIMING_JSON);
    let speedup = if timing_json.is_file() {
        write_timing(&read_json(&timing_json)?, &dir)?
    } else {
        warn!("no {} yet; timing table skipped", timing_json.display());
        Vec::new()
    };

    if args.gnuplot {
        let screening = out.join("evaluate").join(SCREENING);
        for (name, text, needed) in [
            ("accuracy.gp", ACCURACY_GP, runs_csv.is_file()),
            ("validation.gp", VALIDATION_GP, !runs.is_empty()),
            ("timing.gp", TIMING_GP, timing_json.is_file()),
            ("screening.gp", SCREENING_GP, screening.is_file()),
        ] {
            if needed {
                let p = dir.join(name);
                fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
            }
        }
        info!("gnuplot scripts in {}; run them from that directory", dir.display());
    }

    write_json(
        &dir.join(SUMMARY),
        &Summary {
            runs_per_mode,
            median_mse,
            pivot_epoch: PIVOT_EPOCH,
            validation,
            speedup_vs_rtol_1e9: speedup,
        },
    )
}
