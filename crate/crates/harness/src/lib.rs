//! Experiment driver for the GEO solvers: declarative specs, a solver
//! registry, seeded and resumable runs under equal oracle budgets, and
//! summaries emitted as plain data files.

pub mod bootstrap;
pub mod error;
pub mod experiment;
pub mod registry;
pub mod report;
pub mod spec;

pub use bootstrap::{bootstrap_median_ci, Band};
pub use error::{HarnessError, Result};
pub use experiment::{
    cell_seed, check_parity, manifest_path, run_cells, run_experiment, run_experiment_with, CellManifest, RunOptions,
    RunRecord,
};
pub use registry::{Solver, REGISTERED};
pub use report::{emit_report, read_metric_rows, ComparisonSummary, EmitFormat, MetricRow};
pub use spec::{ExperimentSpec, InstanceSource, SolverSpec, Sweep};
