//! Accuracy statistics on labelled test grids, signed error bands,
//! critical-trajectory screening and the network-versus-solver timing
//! benchmark.

mod accuracy;
mod bands;
mod curves;
mod screening;
mod timing;

use std::path::Path;

use crate::error::Error;
use crate::power_system::STATE_NAMES;

pub use accuracy::{mse, predict, test_mse, AccuracyReport, BoxStats, SeedAccuracy};
pub use bands::{bands_from_errors, error_bands, write_bands_csv, BandAxis, BandRow};
pub use curves::improvement_after;
pub use screening::{critical_share, screening_pair, ShareSeries, CRITICAL_SEPARATION};
pub use timing::{
    measure, rtol_label, timing_benchmark, Environment, Method, TimingReport, TimingRow,
    TimingSettings,
};

/// Column names for `dim` states: the two-area names when they fit,
/// otherwise `x0, x1, ...`.
pub fn state_names(dim: usize) -> Vec<String> {
    if dim == STATE_NAMES.len() {
        STATE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dim).map(|j| format!("x{j}")).collect()
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}
