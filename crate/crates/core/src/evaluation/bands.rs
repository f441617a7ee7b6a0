use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{csv_error, predict, state_names};
use crate::dataset::LabelledSet;
use crate::error::{Error, Result};
use crate::mlp::{quantile_sorted, Checkpoint};

/// The input along which error quantiles are reported; the other input is
/// marginalised out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandAxis {
    Time,
    Power,
}

impl BandAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            BandAxis::Time => "time",
            BandAxis::Power => "power",
        }
    }
}

impl fmt::Display for BandAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BandAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(BandAxis::Time),
            "power" => Ok(BandAxis::Power),
            other => Err(Error::Config(format!("unknown band axis '{other}'"))),
        }
    }
}

/// Signed-error distribution of one state at one grid line. `q5`/`q95`
/// bound the inner 90%, `q25`/`q75` the inner 50%.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub state: String,
    pub axis: BandAxis,
    pub grid_value: f64,
    pub q0: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q100: f64,
    pub mean: f64,
    pub q5: f64,
    pub q95: f64,
}

/// Quantiles of `prediction - label` per state and grid line of `axis`,
/// ordered by state then grid value.
pub fn bands_from_errors(
    pred: ArrayView2<f64>,
    set: &LabelledSet,
    axis: BandAxis,
) -> Result<Vec<BandRow>> {
    if pred.dim() != set.x.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} against labels {:?}",
            pred.dim(),
            set.x.dim()
        )));
    }
    let key = match axis {
        BandAxis::Time => &set.t,
        BandAxis::Power => &set.dp7,
    };
    // Grid values are exact copies of the lattice nodes, so bitwise keys work.
    let mut lines: BTreeMap<u64, (f64, Vec<usize>)> = BTreeMap::new();
    for (k, &v) in key.iter().enumerate() {
        let ordered = if v >= 0.0 { v.to_bits() ^ (1 << 63) } else { !v.to_bits() };
        lines.entry(ordered).or_insert_with(|| (v, Vec::new())).1.push(k);
    }
    let names = state_names(set.x.ncols());
    let mut rows = Vec::with_capacity(names.len() * lines.len());
    let mut err = Vec::new();
    for (j, name) in names.iter().enumerate() {
        for (value, idx) in lines.values() {
            err.clear();
            err.extend(idx.iter().map(|&k| pred[[k, j]] - set.x[[k, j]]));
            let mean = err.iter().sum::<f64>() / err.len() as f64;
            err.sort_by(f64::total_cmp);
            let q = |p: f64| quantile_sorted(&err, p);
            rows.push(BandRow {
                state: name.clone(),
                axis,
                grid_value: *value,
                q0: err[0],
                q25: q(0.25),
                q50: q(0.5),
                q75: q(0.75),
                q100: err[err.len() - 1],
                mean,
                q5: q(0.05),
                q95: q(0.95),
            });
        }
    }
    Ok(rows)
}

/// Error bands of a checkpoint on a labelled grid.
pub fn error_bands(ckpt: &Checkpoint, set: &LabelledSet, axis: BandAxis) -> Result<Vec<BandRow>> {
    bands_from_errors(predict(ckpt, set)?.view(), set, axis)
}

/// Long-format table `state,axis,grid_value,q0,q25,q50,q75,q100,mean,q5,q95`.
pub fn write_bands_csv(rows: &[BandRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn grid_set() -> LabelledSet {
        let (t, dp7): (Vec<f64>, Vec<f64>) = [0.0, 1.0, 2.0]
            .iter()
            .flat_map(|&p| [0.0, 0.5, 1.0, 1.5].map(|t| (t, p)))
            .unzip();
        let n = t.len();
        LabelledSet {
            x: Array2::from_shape_fn((n, 2), |(k, j)| t[k] + dp7[k] * (j as f64 + 1.0)),
            t,
            dp7,
            x0: Array2::zeros((n, 2)),
        }
    }

    #[test]
    fn perfect_prediction_gives_zero_width() {
        let s = grid_set();
        for axis in [BandAxis::Time, BandAxis::Power] {
            let rows = bands_from_errors(s.x.view(), &s, axis).unwrap();
            assert!(rows.iter().all(|r| r.q0 == 0.0 && r.q100 == 0.0 && r.mean == 0.0));
        }
    }

    #[test]
    fn bands_are_nested_and_grouped() {
        let s = grid_set();
        let pred = Array2::from_shape_fn(s.x.dim(), |(k, j)| s.x[[k, j]] + ((k * 7 + j * 3) % 5) as f64 - 2.0);
        let rows = bands_from_errors(pred.view(), &s, BandAxis::Time).unwrap();
        assert_eq!(rows.len(), 2 * 4);
        assert_eq!(rows.iter().map(|r| r.grid_value).take(4).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0, 1.5]);
        for r in &rows {
            assert!(r.q0 <= r.q5 && r.q5 <= r.q25 && r.q25 <= r.q50);
            assert!(r.q50 <= r.q75 && r.q75 <= r.q95 && r.q95 <= r.q100);
        }
        let power = bands_from_errors(pred.view(), &s, BandAxis::Power).unwrap();
        assert_eq!(power.len(), 2 * 3);
        assert_eq!(power[2].grid_value, 2.0);
    }

    #[test]
    fn csv_header_is_long_format() {
        let s = grid_set();
        let rows = bands_from_errors(s.x.view(), &s, BandAxis::Power).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bands.csv");
        write_bands_csv(&rows, &p).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "state,axis,grid_value,q0,q25,q50,q75,q100,mean,q5,q95"
        );
        assert!(text.lines().nth(1).unwrap().starts_with("x0,power,0.0,"));
        assert_eq!("time".parse::<BandAxis>().unwrap(), BandAxis::Time);
    }
}
