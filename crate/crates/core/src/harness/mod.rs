//! Experiment harness: finite-sum drivers, spec files, step-length grid
//! search, replication pools and aggregation with confidence intervals.

pub mod aggregate;
pub mod check;
pub mod config;
pub mod experiment;
pub mod fs;
pub mod grid;

pub use aggregate::{aggregate, AggregateCurve, AggregateMode, CurvePoint};
pub use config::Config;
pub use experiment::{
    aggregate_dir, execute, grid_search_step, run_experiment, run_solver, ExperimentOutcome, ExperimentSpec, Problem,
    SolverKind,
};
pub use fs::{run_finite_sum, run_lsos_bfgs, run_lsos_fs, run_saga_ls, FsConfig, FsMethod, GradientEstimator};
pub use grid::{grid_search, GridOutcome, DEFAULT_STEP_GRID};
