//! Feeder and load data model, file ingestion and topology queries.

mod assignment;
mod feeder;
mod profiles;

pub(crate) use assignment::demand_at;
pub use assignment::{injections, phase_counts, switch_count, ConstraintConfig, PhaseAssignment};
pub(crate) use feeder::complex_impedance;
pub use feeder::{load_feeder, Branch, BranchFile, BusKey, Feeder, FeederFile, Phase, User, UserFile};
pub use profiles::{load_profiles, load_profiles_with_pf, read_profiles, LoadSeries, DEFAULT_POWER_FACTOR};
