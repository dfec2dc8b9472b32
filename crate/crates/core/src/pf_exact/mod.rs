//! Exact three-wire unbalanced power flow by fixed-point current injection.
//!
//! All quantities are per-unit on the feeder's (base_voltage, base_power).
//! The reference bus is held at the balanced phasors 1∠0°, 1∠−120°, 1∠120°.

mod solver;
mod ybus;

pub use solver::{losses, losses_over, reference_voltages, solve_pf, solve_series, PfOptions, PfSolution, PfSolver};
pub use ybus::{build_ybus, YBus};
