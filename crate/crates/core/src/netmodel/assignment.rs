use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Feeder, LoadSeries, Phase};

/// Phase choice for each reconfigurable user, in `Feeder::reconfigurable_users` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhaseAssignment {
    phases: Vec<Phase>,
}

impl PhaseAssignment {
    pub fn new(phases: Vec<Phase>) -> Self {
        PhaseAssignment { phases }
    }

    /// The as-found configuration of `feeder`.
    pub fn original(feeder: &Feeder) -> Self {
        PhaseAssignment {
            phases: feeder.reconfigurable_users().iter().map(|&u| feeder.users[u].original_phase).collect(),
        }
    }

    pub fn from_numbers(numbers: &[u8]) -> Result<Self> {
        numbers
            .iter()
            .map(|&n| Phase::from_number(n).ok_or_else(|| Error::Validation(format!("phase {n} not in {{1,2,3}}"))))
            .collect::<Result<Vec<_>>>()
            .map(PhaseAssignment::new)
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phases
    }

    pub fn phases_mut(&mut self) -> &mut [Phase] {
        &mut self.phases
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn numbers(&self) -> Vec<u8> {
        self.phases.iter().map(|p| p.number()).collect()
    }

    /// One-hot rows: `delta[i][phi] == 1` iff entry `i` is on phase `phi`.
    pub fn to_onehot(&self) -> Vec<[u8; 3]> {
        self.phases
            .iter()
            .map(|p| {
                let mut row = [0; 3];
                row[p.index()] = 1;
                row
            })
            .collect()
    }

    /// Inverse of [`to_onehot`](Self::to_onehot); rows must sum to one.
    pub fn from_onehot(delta: &[[u8; 3]]) -> Result<Self> {
        delta
            .iter()
            .enumerate()
            .map(|(i, row)| {
                if row.iter().map(|&v| v as u32).sum::<u32>() != 1 || row.iter().any(|&v| v > 1) {
                    return Err(Error::Validation(format!("row {i} of delta is not one-hot: {row:?}")));
                }
                Ok(Phase::from_index(row.iter().position(|&v| v == 1).unwrap()))
            })
            .collect::<Result<Vec<_>>>()
            .map(PhaseAssignment::new)
    }

    /// Rotates every entry 1 -> 2 -> 3 -> 1.
    pub fn rotated(&self) -> Self {
        PhaseAssignment::new(self.phases.iter().map(|p| p.rotated()).collect())
    }

    /// Phase of every user of the feeder (fixed users keep their original phase).
    pub fn user_phases(&self, feeder: &Feeder) -> Result<Vec<Phase>> {
        let reconf = feeder.reconfigurable_users();
        if reconf.len() != self.phases.len() {
            return Err(Error::LengthMismatch { expected: reconf.len(), actual: self.phases.len() });
        }
        let mut out: Vec<Phase> = feeder.users.iter().map(|u| u.original_phase).collect();
        for (&u, &p) in reconf.iter().zip(&self.phases) {
            out[u] = p;
        }
        Ok(out)
    }
}

/// Number of users whose phase differs between `a` and `a0`.
pub fn switch_count(a: &PhaseAssignment, a0: &PhaseAssignment) -> Result<usize> {
    if a.len() != a0.len() {
        return Err(Error::LengthMismatch { expected: a0.len(), actual: a.len() });
    }
    Ok(a.phases.iter().zip(&a0.phases).filter(|(x, y)| x != y).count())
}

/// Per-bus, per-phase demand at step `t`, SI units (W + j var), positive for consumption.
/// Buses without users get a zero vector.
pub fn injections(
    feeder: &Feeder,
    assignment: &PhaseAssignment,
    loads: &LoadSeries,
    t: usize,
) -> Result<Vec<[Complex64; 3]>> {
    let phases = assignment.user_phases(feeder)?;
    loads.check_against(feeder)?;
    if t >= loads.horizon() {
        return Err(Error::Validation(format!("timestep {t} outside horizon {}", loads.horizon())));
    }
    Ok(demand_at(feeder, &phases, loads, t, 1.0))
}

/// Demand per bus with user phases already resolved, divided by `scale`.
pub(crate) fn demand_at(
    feeder: &Feeder,
    phases: &[Phase],
    loads: &LoadSeries,
    t: usize,
    scale: f64,
) -> Vec<[Complex64; 3]> {
    let mut out = vec![[Complex64::new(0.0, 0.0); 3]; feeder.buses.len()];
    for (ui, u) in feeder.users.iter().enumerate() {
        out[u.bus][phases[ui].index()] += Complex64::new(loads.p[ui][t] / scale, loads.q[ui][t] / scale);
    }
    out
}

/// Binary (connectivity-only) constraints: switching budget and per-phase user counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintConfig {
    /// Maximum number of users whose phase may change.
    pub delta_max: usize,
    /// Lower bound on users per phase (counts over all single-phase users).
    pub gamma_low: usize,
    /// Upper bound on users per phase.
    pub gamma_upp: usize,
    /// Voltage magnitude bounds, per-unit.
    pub v_min: f64,
    pub v_max: f64,
    pub enforce_phase_counts: bool,
}

impl ConstraintConfig {
    /// Budget `delta_max`, no per-phase count limits, voltage band 0.90-1.10 pu.
    pub fn new(feeder: &Feeder, delta_max: usize) -> Self {
        ConstraintConfig {
            delta_max,
            gamma_low: 0,
            gamma_upp: feeder.users.len(),
            v_min: 0.90,
            v_max: 1.10,
            enforce_phase_counts: false,
        }
    }

    /// Enables per-phase count bounds given as fractions of all users
    /// (lower rounded up, upper rounded down).
    pub fn with_phase_fractions(mut self, feeder: &Feeder, low: f64, upp: f64) -> Self {
        let n = feeder.users.len() as f64;
        self.gamma_low = (n * low - 1e-9).ceil().max(0.0) as usize;
        self.gamma_upp = (n * upp + 1e-9).floor().max(0.0) as usize;
        self.enforce_phase_counts = true;
        self
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        if self.gamma_low > self.gamma_upp || self.gamma_upp > feeder.users.len() {
            return Err(Error::Validation(format!(
                "phase-count bounds must satisfy 0 <= {} <= {} <= {}",
                self.gamma_low,
                self.gamma_upp,
                feeder.users.len()
            )));
        }
        if !(0.0 < self.v_min && self.v_min < self.v_max) {
            return Err(Error::Validation(format!("voltage bounds must satisfy 0 < {} < {}", self.v_min, self.v_max)));
        }
        Ok(())
    }

    /// Returns a description of the first violated binary constraint, if any.
    pub fn binary_violation(&self, feeder: &Feeder, assignment: &PhaseAssignment) -> Result<Option<String>> {
        let original = PhaseAssignment::original(feeder);
        let switches = switch_count(assignment, &original)?;
        if switches > self.delta_max {
            return Ok(Some(format!("switch budget: {switches} > {}", self.delta_max)));
        }
        if self.enforce_phase_counts {
            let counts = phase_counts(&assignment.user_phases(feeder)?);
            for (i, &c) in counts.iter().enumerate() {
                if c < self.gamma_low || c > self.gamma_upp {
                    return Ok(Some(format!(
                        "phase {} hosts {c} users, outside [{}, {}]",
                        i + 1,
                        self.gamma_low,
                        self.gamma_upp
                    )));
                }
            }
        }
        Ok(None)
    }
}

pub fn phase_counts(phases: &[Phase]) -> [usize; 3] {
    let mut counts = [0; 3];
    for p in phases {
        counts[p.index()] += 1;
    }
    counts
}
