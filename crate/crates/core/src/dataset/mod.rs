//! Simulated trajectory database and the training, validation and test grids.

mod database;
mod grid;
mod scenario;
mod subset;

pub use database::{
    build_database, read_record, write_record, Database, EntryStatus, GenerationReport,
    ManifestEntry,
};
pub use grid::{
    axis, overlap_fraction, CollocationGrid, GridSpec, Placement, DP7_GRANULARITY,
    TIME_GRANULARITY, TIME_RANGE,
};
pub use scenario::{
    simulate_scenario, simulate_scenario_with, solve_scenario, ScenarioSolution,
    TrajectoryRecord, REFERENCE_TOLERANCE,
};
pub use subset::{label_grid, select_records, select_training_subset, simulate_grid, validation_grid, LabelledSet};
