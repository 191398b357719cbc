//! Experiment orchestration for mean-field particle systems: plans,
//! the chaos-rate pipeline, rate fits and CSV reports.

pub mod commands;
pub mod exit;
pub mod pipeline;
pub mod plan;
pub mod rate;
pub mod report;
pub mod store;

pub use exit::Status;
pub use pipeline::{evaluate, run_experiment, RunReport};
pub use plan::ExperimentPlan;
pub use rate::{fit_rate, Axis, RateFit};
