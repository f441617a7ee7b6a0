use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_system::DISTURBANCE_RANGE;

/// Post-trip time window covered by every trajectory, in seconds.
pub const TIME_RANGE: (f64, f64) = (0.0, 2.0);

/// Finest stored time step (s).
pub const TIME_GRANULARITY: f64 = 0.001;

/// Finest stored disturbance step (pu).
pub const DP7_GRANULARITY: f64 = 0.002;

/// Placement of grid nodes along an axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// `n` nodes from start to end inclusive; a single node sits at the start.
    #[default]
    Endpoints,
    /// `n` cell centres of `n` equal cells.
    CellCentred,
}

/// Evenly spaced nodes on `[lo, hi]`.
pub fn axis(n: usize, (lo, hi): (f64, f64), placement: Placement) -> Vec<f64> {
    match placement {
        Placement::Endpoints if n == 1 => vec![lo],
        Placement::Endpoints => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + i as f64 * step })
                .collect()
        }
        Placement::CellCentred => {
            let step = (hi - lo) / n as f64;
            (0..n).map(|i| lo + (i as f64 + 0.5) * step).collect()
        }
    }
}

/// A rectangular grid of `n_trajectories` disturbances times
/// `n_points` post-trip instants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n_trajectories: usize,
    pub n_points: usize,
    #[serde(default)]
    pub placement: Placement,
}

impl GridSpec {
    pub fn new(n_trajectories: usize, n_points: usize) -> Result<Self> {
        Self::with_placement(n_trajectories, n_points, Placement::Endpoints)
    }

    pub fn with_placement(n_trajectories: usize, n_points: usize, placement: Placement) -> Result<Self> {
        if n_trajectories == 0 || n_points == 0 {
            return Err(Error::Config(format!(
                "grid needs at least one node per axis, got {n_trajectories} x {n_points}"
            )));
        }
        Ok(Self {
            n_trajectories,
            n_points,
            placement,
        })
    }

    /// Full storage lattice (0.002 pu by 1 ms).
    pub fn database_lattice() -> Self {
        let n_dp = lattice_len(DISTURBANCE_RANGE, DP7_GRANULARITY);
        let n_t = lattice_len(TIME_RANGE, TIME_GRANULARITY);
        Self::new(n_dp, n_t).unwrap()
    }

    /// Test grid: 301 disturbances by 2001 instants (0.02 pu, 1 ms).
    pub fn test_full() -> Self {
        Self::new(301, 2001).unwrap()
    }

    /// Desk-scale test grid: 31 by 201 (0.2 pu, 10 ms).
    pub fn test_reduced() -> Self {
        Self::new(31, 201).unwrap()
    }

    /// Validation grid: 24 by 40 cell centres, 960 points.
    pub fn validation() -> Self {
        Self::with_placement(24, 40, Placement::CellCentred).unwrap()
    }

    pub fn len(&self) -> usize {
        self.n_trajectories * self.n_points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dp7_values(&self) -> Vec<f64> {
        axis(self.n_trajectories, DISTURBANCE_RANGE, self.placement)
    }

    pub fn time_values(&self) -> Vec<f64> {
        axis(self.n_points, TIME_RANGE, self.placement)
    }

    /// Trajectory-major `(t, dP7)` pairs.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let ts = self.time_values();
        self.dp7_values()
            .into_iter()
            .flat_map(|p| ts.iter().map(move |&t| (t, p)))
            .collect()
    }
}

fn lattice_len((lo, hi): (f64, f64), step: f64) -> usize {
    ((hi - lo) / step).round() as usize + 1
}

/// Collocation points for the physics loss.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    /// `(t, dP7)` pairs.
    pub points: Vec<(f64, f64)>,
}

impl CollocationGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            points: spec.points(),
        }
    }

    pub fn n_f(&self) -> usize {
        self.points.len()
    }
}

impl Default for CollocationGrid {
    /// 25 disturbances by 41 instants.
    fn default() -> Self {
        Self::new(GridSpec::new(25, 41).unwrap())
    }
}

/// Index of every value of `sub` on the `lattice` axis, or an alignment error naming `axis_name`.
pub(crate) fn align(sub: &[f64], lattice: &[f64], axis_name: &str) -> Result<Vec<usize>> {
    if lattice.is_empty() {
        return Err(Error::Alignment(format!("empty {axis_name} lattice")));
    }
    let lo = lattice[0];
    let step = if lattice.len() > 1 { lattice[1] - lattice[0] } else { 1.0 };
    sub.iter()
        .map(|&v| {
            let pos = (v - lo) / step;
            let k = pos.round();
            let tol = 1e-9 * (1.0 + v.abs());
            if k < 0.0 || k as usize >= lattice.len() || (lattice[k as usize] - v).abs() > tol {
                Err(Error::Alignment(format!(
                    "{axis_name} = {v} is not a node of the stored {axis_name} lattice"
                )))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

/// Fraction of `a` that also appears in `b` (to 1e-12).
pub fn overlap_fraction(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let hits = a
        .iter()
        .filter(|p| {
            b.iter()
                .any(|q| (p.0 - q.0).abs() < 1e-12 && (p.1 - q.1).abs() < 1e-12)
        })
        .count();
    hits as f64 / a.len() as f64
}
