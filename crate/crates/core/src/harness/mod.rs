//! Experiment configs, the end-to-end pipeline, report rendering and the
//! command-line front end.

pub mod commands;
pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{DatasetSource, ExperimentConfig, ModelRecipe, TeacherEntry, TeacherSource};
pub use pipeline::{run_pipeline, ExperimentReport, RunOptions};
pub use report::{correlate_experiments, correlation_tables, emit_report, CorrelationTables, Format};
