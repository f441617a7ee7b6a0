use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{csv_error, state_names};
use crate::dataset::LabelledSet;
use crate::error::{Error, Result};
use crate::mlp::{forward_batch, quantile_sorted, Checkpoint};
use crate::training::LossMode;

/// Network prediction at every point of `set`, physical units.
pub fn predict(ckpt: &Checkpoint, set: &LabelledSet) -> Result<Array2<f64>> {
    let inputs = Array2::from_shape_fn((set.len(), 2), |(k, c)| if c == 0 { set.t[k] } else { set.dp7[k] });
    forward_batch(&ckpt.params, &ckpt.normalization, &inputs)
}

/// Per-column mean squared difference.
pub fn mse(pred: ArrayView2<f64>, labels: ArrayView2<f64>) -> Result<Vec<f64>> {
    if pred.dim() != labels.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} against labels {:?}",
            pred.dim(),
            labels.dim()
        )));
    }
    let n = pred.nrows().max(1) as f64;
    Ok(pred
        .columns()
        .into_iter()
        .zip(labels.columns())
        .map(|(p, l)| p.iter().zip(l).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
        .collect())
}

/// Per-state test MSE of a checkpoint: rad² for angles, rad²/s² for
/// frequencies.
pub fn test_mse(ckpt: &Checkpoint, test: &LabelledSet) -> Result<Vec<f64>> {
    mse(predict(ckpt, test)?.view(), test.x.view())
}

/// Box-and-whisker summary with Tukey whiskers: the most extreme values
/// within 1.5 IQR of the quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub min: f64,
    pub max: f64,
}

impl BoxStats {
    /// `None` for an empty or non-finite sample.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let reach = 1.5 * (q3 - q1);
        let lo = v.iter().copied().find(|&x| x >= q1 - reach).unwrap_or(v[0]);
        let hi = v.iter().rev().copied().find(|&x| x <= q3 + reach).unwrap_or(v[v.len() - 1]);
        Some(Self {
            n: v.len(),
            median: quantile_sorted(&v, 0.5),
            q1,
            q3,
            whisker_low: lo,
            whisker_high: hi,
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

/// Test MSE of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub mode: LossMode,
    pub seed: u64,
    pub mse: Vec<f64>,
}

/// Test-set accuracy of several modes and seeds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub runs: Vec<SeedAccuracy>,
}

impl AccuracyReport {
    pub fn push(&mut self, run: SeedAccuracy) {
        self.runs.push(run);
    }

    pub fn modes(&self) -> Vec<LossMode> {
        LossMode::ALL
            .into_iter()
            .filter(|m| self.runs.iter().any(|r| r.mode == *m))
            .collect()
    }

    /// MSE of `state` over the seeds of `mode`, in insertion order.
    pub fn values(&self, mode: LossMode, state: usize) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.mode == mode)
            .filter_map(|r| r.mse.get(state).copied())
            .collect()
    }

    pub fn stats(&self, mode: LossMode, state: usize) -> Option<BoxStats> {
        BoxStats::from_values(&self.values(mode, state))
    }

    pub fn median(&self, mode: LossMode, state: usize) -> Option<f64> {
        self.stats(mode, state).map(|s| s.median)
    }

    fn dim(&self) -> usize {
        self.runs.first().map_or(0, |r| r.mse.len())
    }

    /// One row per run: `mode,seed,mse_<state>...`.
    pub fn write_runs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let names = state_names(self.dim());
        let mut header = vec!["mode".to_string(), "seed".to_string()];
        header.extend(names.iter().map(|n| format!("mse_{n}")));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for r in &self.runs {
            let mut rec = vec![r.mode.to_string(), r.seed.to_string()];
            rec.extend(r.mse.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a table written by [`AccuracyReport::write_runs_csv`].
    pub fn read_runs_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let mut out = Self::default();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let bad = |what: &str| Error::format(path, format!("bad {what} in row {:?}", rec.position()));
            let mode = rec.get(0).ok_or_else(|| bad("mode"))?.parse()?;
            let seed = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("seed"))?;
            let mse = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad("value")))
                .collect::<Result<_>>()?;
            out.push(SeedAccuracy { mode, seed, mse });
        }
        Ok(out)
    }

    /// Box statistics per mode and state.
    pub fn write_stats_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record([
            "mode", "state", "n", "median", "q1", "q3", "whisker_low", "whisker_high", "min", "max",
        ])
        .map_err(|e| csv_error(path, e))?;
        let names = state_names(self.dim());
        for mode in self.modes() {
            for (j, name) in names.iter().enumerate() {
                let Some(s) = self.stats(mode, j) else { continue };
                let nums = [s.median, s.q1, s.q3, s.whisker_low, s.whisker_high, s.min, s.max];
                let mut rec = vec![mode.to_string(), name.clone(), s.n.to_string()];
                rec.extend(nums.iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{MlpParameters, NetworkConfig, Normalization};
    use ndarray::array;

    fn constant_ckpt(value: f64, dim: usize) -> Checkpoint {
        let config = NetworkConfig {
            output_dim: dim,
            ..NetworkConfig::new(1, 3)
        };
        let mut normalization = Normalization::identity(2, dim);
        normalization.output_shift = vec![value; dim];
        Checkpoint {
            config,
            normalization,
            seed: 0,
            epoch: 0,
            params: MlpParameters::zeros(&config),
        }
    }

    fn small_set() -> LabelledSet {
        LabelledSet {
            t: vec![0.0, 0.5, 1.0, 1.5],
            dp7: vec![0.0, 0.0, 2.0, 2.0],
            x0: Array2::zeros((4, 2)),
            x: array![[1.0, -1.0], [2.0, 0.0], [4.0, 1.0], [5.0, 3.0]],
        }
    }

    #[test]
    fn perfect_prediction_has_zero_error() {
        let s = small_set();
        assert_eq!(mse(s.x.view(), s.x.view()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn constant_network_gives_spread_about_constant() {
        let s = small_set();
        let c = 1.5;
        let got = test_mse(&constant_ckpt(c, 2), &s).unwrap();
        for (j, g) in got.iter().enumerate() {
            let col = s.x.column(j);
            let mean = col.mean().unwrap();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            // E[(x - c)^2] = Var(x) + (mean - c)^2.
            let expected = var + (mean - c).powi(2);
            assert!((g - expected).abs() < 1e-14, "{g} vs {expected}");
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((3, 3));
        assert!(matches!(mse(a.view(), b.view()), Err(Error::Shape(_))));
    }

    #[test]
    fn box_stats_follow_tukey() {
        let s = BoxStats::from_values(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!((s.q1, s.q3), (2.0, 4.0));
        assert_eq!(s.whisker_low, 1.0);
        assert_eq!(s.whisker_high, 4.0);
        assert_eq!(s.max, 100.0);
        assert!(BoxStats::from_values(&[]).is_none());
        assert!(BoxStats::from_values(&[1.0, f64::NAN]).is_none());
    }

    #[test]
    fn report_groups_by_mode() {
        let mut r = AccuracyReport::default();
        for (mode, seed, v) in [(LossMode::Nn, 0, 4.0), (LossMode::Pinn, 0, 1.0), (LossMode::Nn, 1, 2.0)] {
            r.push(SeedAccuracy {
                mode,
                seed,
                mse: vec![v; 10],
            });
        }
        assert_eq!(r.modes(), vec![LossMode::Nn, LossMode::Pinn]);
        assert_eq!(r.values(LossMode::Nn, 3), vec![4.0, 2.0]);
        assert_eq!(r.median(LossMode::Nn, 0), Some(3.0));
        assert_eq!(r.median(LossMode::DtNn, 0), None);
        let dir = tempfile::tempdir().unwrap();
        r.write_runs_csv(dir.path().join("runs.csv")).unwrap();
        r.write_stats_csv(dir.path().join("stats.csv")).unwrap();
        assert_eq!(AccuracyReport::read_runs_csv(dir.path().join("runs.csv")).unwrap(), r);
        let runs = std::fs::read_to_string(dir.path().join("runs.csv")).unwrap();
        assert!(runs.starts_with("mode,seed,mse_delta1,"));
        assert_eq!(runs.lines().count(), 4);
        let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert_eq!(stats.lines().count(), 1 + 2 * 10);
    }
}
