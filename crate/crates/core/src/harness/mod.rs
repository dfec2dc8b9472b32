//! Experiment procedures behind the CLI, with their reports.

pub mod commands;
pub mod config;
pub mod fixtures;
pub mod report;

pub use commands::{
    cmd_export_lp, cmd_optimize, cmd_pf, cmd_scaling, cmd_sweep, cmd_validate, write_fixtures, PfReport, ScaleOptions,
};
pub use config::{Method, RunConfig};
pub use report::{
    DistributionSummary, RunReport, ScalingReport, ScalingRow, SweepPoint, SweepReport, ValidationReport,
    SCHEMA_VERSION,
};
