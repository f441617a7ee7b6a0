use ndarray::{Array2, Axis};

use super::database::Database;
use super::grid::{align, GridSpec};
use super::scenario::{simulate_scenario, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::parallel;
use crate::power_system::ReducedSystem;

/// Labelled points `(t, dP7) -> x`, with the clearing state `x0` of each
/// point's trajectory alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSet {
    pub t: Vec<f64>,
    pub dp7: Vec<f64>,
    pub x0: Array2<f64>,
    pub x: Array2<f64>,
}

impl LabelledSet {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.t.iter().copied().zip(self.dp7.iter().copied()).collect()
    }

    /// Trajectory-major flattening of records sampled at the same row
    /// indices `cols` of their time axes.
    pub fn from_records(records: &[TrajectoryRecord], cols: &[usize]) -> Result<Self> {
        let dim = records.first().map_or(0, |r| r.x0.len());
        let n = records.len() * cols.len();
        let mut t = Vec::with_capacity(n);
        let mut dp7 = Vec::with_capacity(n);
        let mut x0 = Array2::zeros((n, dim));
        let mut x = Array2::zeros((n, dim));
        let mut k = 0;
        for r in records {
            if r.x0.len() != dim {
                return Err(Error::Shape("records with different state sizes".into()));
            }
            for &c in cols {
                if c >= r.len() {
                    return Err(Error::Shape(format!("time index {c} beyond record length {}", r.len())));
                }
                t.push(r.times[c]);
                dp7.push(r.dp7);
                x0.row_mut(k).assign(&ndarray::ArrayView1::from(&r.x0[..]));
                x.row_mut(k).assign(&r.states.index_axis(Axis(0), c));
                k += 1;
            }
        }
        Ok(Self { t, dp7, x0, x })
    }
}

/// Picks the `spec` grid out of a stored lattice, simulating any row that is
/// not yet on disk. Fails with an alignment error if the grid does not fall
/// on lattice nodes.
pub fn select_training_subset(db: &mut Database, spec: &GridSpec) -> Result<LabelledSet> {
    let records = select_records(db, spec)?;
    let cols: Vec<usize> = (0..spec.n_points).collect();
    LabelledSet::from_records(&records, &cols)
}

/// The trajectories of `spec` from a stored lattice, each cut down to the
/// grid's sample times.
pub fn select_records(db: &mut Database, spec: &GridSpec) -> Result<Vec<TrajectoryRecord>> {
    let rows = align(&spec.dp7_values(), db.dp7_values(), "dP7")?;
    let cols = align(&spec.time_values(), db.time_values(), "t")?;
    let records = db.records(&rows)?;
    Ok(records
        .into_iter()
        .map(|r| TrajectoryRecord {
            times: cols.iter().map(|&c| r.times[c]).collect(),
            states: r.states.select(Axis(0), &cols),
            dp7: r.dp7,
            x0: r.x0,
        })
        .collect())
}

/// Simulates `spec` directly at the reference tolerance, one scenario per
/// disturbance value.
pub fn label_grid(system: &ReducedSystem, spec: &GridSpec) -> Result<LabelledSet> {
    let records = simulate_grid(system, spec)?;
    let cols: Vec<usize> = (0..spec.n_points).collect();
    LabelledSet::from_records(&records, &cols)
}

/// All trajectories of `spec`, in disturbance order.
pub fn simulate_grid(system: &ReducedSystem, spec: &GridSpec) -> Result<Vec<TrajectoryRecord>> {
    let times = spec.time_values();
    parallel::par_map(&spec.dp7_values(), |&p| simulate_scenario(system, p, &times))
        .into_iter()
        .collect()
}

/// The 960-point validation set: 24 disturbances by 40 instants, each at
/// the centre of its cell.
pub fn validation_grid(system: &ReducedSystem) -> Result<LabelledSet> {
    label_grid(system, &GridSpec::validation())
}
