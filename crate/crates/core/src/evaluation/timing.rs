//! Wall-clock cost per data point of the network and of the solver.
//!
//! Solver protocol: a data point is the state at the horizon, so one point
//! costs a fresh post-trip integration from the clearing state to that
//! horizon. The clearing states are computed beforehand and are not timed.
//! Network protocol: one batched pass over `nn_batch` inputs at the horizon
//! (disturbances spread over the domain), divided by the batch size. Both run
//! on the calling thread.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::csv_error;
use crate::dataset::{solve_scenario, REFERENCE_TOLERANCE};
use crate::error::{Error, Result};
use crate::mlp::{forward_batch_single, Checkpoint};
use crate::ode_solver::{integrate_adaptive, SolverSettings};
use crate::parallel;
use crate::power_system::{post_trip_system, Disturbance, ReducedSystem, DISTURBANCE_RANGE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimingSettings {
    pub horizons: Vec<f64>,
    pub rtols: Vec<f64>,
    /// Disturbances integrated per solver measurement.
    pub dp7: Vec<f64>,
    pub nn_batch: usize,
    /// Each measurement is repeated until it spans at least this long.
    pub min_seconds: f64,
    pub warmup: usize,
}

impl Default for TimingSettings {
    fn default() -> Self {
        Self {
            horizons: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0],
            rtols: vec![1e-5, 1e-9, 1e-13],
            dp7: vec![0.5, 1.5, 2.5, 3.5, 4.5, 5.5],
            nn_batch: 1000,
            min_seconds: 0.05,
            warmup: 1,
        }
    }
}

impl TimingSettings {
    pub fn validate(&self) -> Result<()> {
        let bad = self.horizons.is_empty()
            || self.horizons.iter().any(|h| !(*h > 0.0 && h.is_finite()))
            || self.rtols.iter().any(|r| !(*r > 0.0))
            || self.dp7.is_empty()
            || self.nn_batch == 0
            || !(self.min_seconds > 0.0);
        if bad {
            return Err(Error::Config(format!("invalid timing settings {self:?}")));
        }
        Ok(())
    }
}

/// Where the numbers were measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub os: String,
    pub arch: String,
    pub available_cpus: usize,
    pub worker_threads: usize,
    pub parallel_feature: bool,
    pub debug_assertions: bool,
    pub version: String,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            available_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            worker_threads: parallel::threads(),
            parallel_feature: cfg!(feature = "parallel"),
            debug_assertions: cfg!(debug_assertions),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Rk45,
    Nn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub horizon: f64,
    pub method: Method,
    /// `rtol=<tol>` for the solver, the checkpoint label for networks.
    pub variant: String,
    pub seconds_per_point: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub environment: Environment,
}

pub fn rtol_label(rtol: f64) -> String {
    format!("rtol={rtol:e}")
}

impl TimingReport {
    pub fn seconds_per_point(&self, method: Method, variant: &str, horizon: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.variant == variant && r.horizon == horizon)
            .map(|r| r.seconds_per_point)
    }

    /// Solver time over network time at one horizon.
    pub fn speedup(&self, horizon: f64, rtol: f64, nn_variant: &str) -> Option<f64> {
        let rk = self.seconds_per_point(Method::Rk45, &rtol_label(rtol), horizon)?;
        let nn = self.seconds_per_point(Method::Nn, nn_variant, horizon)?;
        Some(rk / nn)
    }

    fn variants(&self, method: Method) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.rows.iter().filter(|r| r.method == method) {
            if !out.contains(&r.variant) {
                out.push(r.variant.clone());
            }
        }
        out
    }

    pub fn horizons(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.horizon) {
                out.push(r.horizon);
            }
        }
        out
    }

    /// One row per horizon: seconds per point of every solver tolerance and
    /// network, then the speed-up of the first network over each tolerance.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let rk = self.variants(Method::Rk45);
        let nn = self.variants(Method::Nn);
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut header = vec!["horizon".to_string()];
        header.extend(rk.iter().map(|v| format!("rk45_{}", v.replace('=', "_"))));
        header.extend(nn.iter().map(|v| format!("nn_{v}")));
        if let Some(first) = nn.first() {
            header.extend(rk.iter().map(|v| format!("speedup_{first}_vs_{}", v.replace('=', "_"))));
        }
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for h in self.horizons() {
            let mut rec = vec![h.to_string()];
            rec.extend(rk.iter().map(|v| cell(self.seconds_per_point(Method::Rk45, v, h))));
            rec.extend(nn.iter().map(|v| cell(self.seconds_per_point(Method::Nn, v, h))));
            if let Some(first) = nn.first() {
                rec.extend(rk.iter().map(|v| {
                    let r = self.seconds_per_point(Method::Rk45, v, h);
                    let n = self.seconds_per_point(Method::Nn, first, h);
                    cell(r.zip(n).map(|(r, n)| r / n))
                }));
            }
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Seconds per call of `f`, repeating until the total exceeds `min_seconds`.
/// Returns the time and the final repetition count.
pub fn measure(min_seconds: f64, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<(f64, usize)> {
    for _ in 0..warmup {
        f()?;
    }
    let mut reps = 1usize;
    loop {
        let start = Instant::now();
        for _ in 0..reps {
            f()?;
        }
        let el = start.elapsed().as_secs_f64();
        if el >= min_seconds {
            return Ok((el / reps as f64, reps));
        }
        let factor = if el > 0.0 { (1.2 * min_seconds / el).ceil() as usize } else { 10 };
        reps = reps.saturating_mul(factor.clamp(2, 1000));
    }
}

/// Times the solver at every tolerance and each labelled checkpoint at every
/// horizon.
pub fn timing_benchmark(
    base: &ReducedSystem,
    networks: &[(String, Checkpoint)],
    settings: &TimingSettings,
) -> Result<TimingReport> {
    settings.validate()?;
    let post = post_trip_system(base)?;
    let reference = SolverSettings::with_tolerance(REFERENCE_TOLERANCE);
    let starts: Vec<(Disturbance, Vec<f64>)> = settings
        .dp7
        .iter()
        .map(|&p| {
            let sol = solve_scenario(base, p, 1e-6, &reference)?;
            Ok((Disturbance::new(p)?, sol.clearing))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for &h in &settings.horizons {
        for &rtol in &settings.rtols {
            let solver = SolverSettings::with_tolerance(rtol);
            let (secs, reps) = measure(settings.min_seconds, settings.warmup, || {
                for (u, x0) in &starts {
                    let traj = integrate_adaptive(|_, x, dx| post.rhs_into(x, *u, dx), x0, (0.0, h), &solver)?;
                    black_box(traj.last_state());
                }
                Ok(())
            })?;
            rows.push(TimingRow {
                horizon: h,
                method: Method::Rk45,
                variant: rtol_label(rtol),
                seconds_per_point: secs / starts.len() as f64,
                repetitions: reps,
            });
        }
        let (lo, hi) = DISTURBANCE_RANGE;
        let n = settings.nn_batch;
        let inputs = Array2::from_shape_fn((n, 2), |(k, c)| {
            if c == 0 {
                h
            } else {
                lo + (hi - lo) * k as f64 / (n.max(2) - 1) as f64
            }
        });
        for (label, ckpt) in networks {
            let (secs, reps) = measure(settings.min_seconds, settings.warmup, || {
                black_box(forward_batch_single(&ckpt.params, &ckpt.normalization, &inputs)?);
                Ok(())
            })?;
            rows.push(TimingRow {
                horizon: h,
                method: Method::Nn,
                variant: label.clone(),
                seconds_per_point: secs / n as f64,
                repetitions: reps,
            });
        }
    }
    Ok(TimingReport {
        rows,
        environment: Environment::current(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{init_params, NetworkConfig, Normalization};

    #[test]
    fn measure_scales_repetitions() {
        let mut calls = 0;
        let (secs, reps) = measure(1e-3, 2, || {
            calls += 1;
            black_box((0..100).sum::<u64>());
            Ok(())
        })
        .unwrap();
        assert!(secs > 0.0);
        assert!(reps > 1);
        assert!(calls >= reps + 2);
    }

    #[test]
    fn small_benchmark_has_every_cell() {
        let config = NetworkConfig::new(2, 8);
        let ckpt = Checkpoint {
            config,
            normalization: Normalization::identity(2, 10),
            seed: 0,
            epoch: 0,
            params: init_params(&config, 0).unwrap(),
        };
        let settings = TimingSettings {
            horizons: vec![0.05, 0.5],
            rtols: vec![1e-5, 1e-9],
            dp7: vec![1.0],
            nn_batch: 16,
            min_seconds: 1e-4,
            warmup: 0,
        };
        let sys = ReducedSystem::kundur_two_area();
        let r = timing_benchmark(&sys, &[("small".into(), ckpt)], &settings).unwrap();
        assert_eq!(r.rows.len(), 2 * 3);
        assert!(r.rows.iter().all(|row| row.seconds_per_point > 0.0));
        assert!(r.speedup(0.5, 1e-9, "small").unwrap() > 0.0);
        assert_eq!(r.horizons(), vec![0.05, 0.5]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("timing.csv");
        r.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "horizon,rk45_rtol_1e-5,rk45_rtol_1e-9,nn_small,speedup_small_vs_rtol_1e-5,speedup_small_vs_rtol_1e-9"
        );
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn rejects_empty_settings() {
        let s = TimingSettings {
            horizons: vec![],
            ..TimingSettings::default()
        };
        assert!(s.validate().is_err());
    }
}
