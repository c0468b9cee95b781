//! Experiment orchestration: scenario grids, replicate aggregation, Pareto
//! fronts and result files.

pub mod config;
pub mod experiment;
pub mod pareto;
pub mod report;

pub use config::{DatasetConfig, ExperimentConfig, ProcessorLists};
pub use experiment::{lower_median, run_experiment, Aggregate, ExperimentResults, RunRecord};
pub use pareto::{dominates, pareto_frontier, ParetoPoint};
pub use report::{emit_reports, read_metadata, read_pareto, read_summary};
