use std::path::Path;

use serde::{Deserialize, Serialize};

use super::csv_error;
use crate::dataset::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::power_system::ReducedSystem;

/// Angle separation beyond which a trajectory counts as critical.
pub const CRITICAL_SEPARATION: f64 = std::f64::consts::FRAC_PI_2;

/// Fraction of trajectories over the separation threshold at each instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareSeries {
    pub t: Vec<f64>,
    pub share: Vec<f64>,
}

impl ShareSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Share at the last instant.
    pub fn terminal(&self) -> Option<f64> {
        self.share.last().copied()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["t", "share"]).map_err(|e| csv_error(path, e))?;
        for (t, s) in self.t.iter().zip(&self.share) {
            w.write_record([t.to_string(), s.to_string()]).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// State indices of the bus-7 and bus-9 angles.
pub fn screening_pair(sys: &ReducedSystem) -> Result<(usize, usize)> {
    Ok((sys.bus_index(7)?, sys.bus_index(9)?))
}

/// Share of trajectories with `x[a] - x[b] > threshold` at each sample.
/// All records must share one time axis.
pub fn critical_share(records: &[TrajectoryRecord], (a, b): (usize, usize), threshold: f64) -> Result<ShareSeries> {
    let Some(first) = records.first() else {
        return Ok(ShareSeries {
            t: Vec::new(),
            share: Vec::new(),
        });
    };
    let mut count = vec![0usize; first.len()];
    for r in records {
        if r.times != first.times {
            return Err(Error::Shape(format!("trajectory dP7 = {} has a different time axis", r.dp7)));
        }
        if a.max(b) >= r.states.ncols() {
            return Err(Error::Shape(format!("state index beyond {} states", r.states.ncols())));
        }
        for (c, row) in count.iter_mut().zip(r.states.rows()) {
            if row[a] - row[b] > threshold {
                *c += 1;
            }
        }
    }
    let n = records.len() as f64;
    Ok(ShareSeries {
        t: first.times.clone(),
        share: count.into_iter().map(|c| c as f64 / n).collect(),
    })
}
