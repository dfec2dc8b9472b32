//! Static phase reconfiguration of single-phase users on three-wire LV feeders.
//!
//! Exact and linearized power flow, imbalance metrics, and three optimizers
//! (genetic algorithm, binary program with branch-and-bound, exhaustive oracle).

pub mod error;
pub mod ga;
pub mod harness;
pub mod ld3f;
pub mod metrics;
pub mod miqp;
pub mod netmodel;
pub mod oracle;
pub mod pf_exact;
pub mod problem;

pub use error::{Error, Result};
pub use metrics::{Metric, ObjectiveSpec};
pub use netmodel::{ConstraintConfig, Feeder, LoadSeries, Phase, PhaseAssignment};
pub use problem::{Evaluation, Problem, Space};
