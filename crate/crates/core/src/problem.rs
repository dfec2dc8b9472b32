//! A phase-reconfiguration instance and its evaluation in either power-flow space.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ld3f::{branch_ab, sweep, AbPair, Ld3fSolution};
use crate::metrics::{MetricPipeline, MetricTable, ObjectiveSpec};
use crate::netmodel::{demand_at, ConstraintConfig, Feeder, LoadSeries, PhaseAssignment};
use crate::pf_exact::{PfOptions, PfSolution, PfSolver};

/// Which power-flow model scores a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    ExactPf,
    Ld3f,
}

impl fmt::Display for Space {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Space::ExactPf => "exact-pf",
            Space::Ld3f => "ld3f",
        })
    }
}

impl FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Space> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "exact-pf" | "exact" | "pf" => Ok(Space::ExactPf),
            "ld3f" | "lindist3flow" => Ok(Space::Ld3f),
            _ => Err(Error::Validation(format!("unknown evaluator '{s}' (exact-pf or ld3f)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Objective value; NaN when the power flow diverged or the metric is undefined.
    pub objective: f64,
    /// First operational violation (voltage, thermal, convergence), if any.
    pub violation: Option<String>,
}

impl Evaluation {
    pub fn feasible(&self) -> bool {
        self.violation.is_none() && self.objective.is_finite()
    }
}

/// Per-phase apparent-power box for a branch, VA: the tighter of the power limit and
/// the ampacity at nominal voltage.
pub fn thermal_limit_va(feeder: &Feeder, branch: usize) -> Option<f64> {
    let b = &feeder.branches[branch];
    let from_amps = b.ampacity.map(|a| a * feeder.base_voltage);
    match (b.power_limit, from_amps) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, y) => x.or(y),
    }
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub feeder: Feeder,
    pub loads: LoadSeries,
    pub constraints: ConstraintConfig,
    pub pf_options: PfOptions,
    pipeline: MetricPipeline,
    solver: PfSolver,
    ab: Vec<AbPair>,
}

impl Problem {
    pub fn new(
        feeder: Feeder,
        loads: LoadSeries,
        constraints: ConstraintConfig,
        spec: ObjectiveSpec,
    ) -> Result<Problem> {
        loads.check_against(&feeder)?;
        if loads.horizon() == 0 {
            return Err(Error::Validation("empty load horizon".into()));
        }
        constraints.validate(&feeder)?;
        let pipeline = MetricPipeline::new(&feeder, &loads, spec)?;
        let solver = PfSolver::new(&feeder)?;
        let ab = branch_ab(&feeder);
        Ok(Problem { feeder, loads, constraints, pf_options: PfOptions::default(), pipeline, solver, ab })
    }

    pub fn with_pf_options(mut self, options: PfOptions) -> Problem {
        self.pf_options = options;
        self
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.pipeline.spec
    }

    pub fn pipeline(&self) -> &MetricPipeline {
        &self.pipeline
    }

    pub fn original(&self) -> PhaseAssignment {
        PhaseAssignment::original(&self.feeder)
    }

    pub fn binary_violation(&self, a: &PhaseAssignment) -> Result<Option<String>> {
        self.constraints.binary_violation(&self.feeder, a)
    }

    /// Exact power flow at every timestep (non-convergence is flagged per solution).
    pub fn solve_exact(&self, a: &PhaseAssignment) -> Result<Vec<PfSolution>> {
        let phases = a.user_phases(&self.feeder)?;
        self.solver.solve_series(&self.feeder, &phases, &self.loads, &self.pf_options)
    }

    pub fn solve_ld3f(&self, a: &PhaseAssignment) -> Result<Vec<Ld3fSolution>> {
        let phases = a.user_phases(&self.feeder)?;
        Ok((0..self.loads.horizon())
            .map(|t| {
                let d = demand_at(&self.feeder, &phases, &self.loads, t, self.feeder.base_power);
                sweep(&self.feeder, &self.ab, &d)
            })
            .collect())
    }

    /// Objective and operational feasibility of `a`; binary constraints are not checked.
    pub fn evaluate(&self, a: &PhaseAssignment, space: Space) -> Result<Evaluation> {
        match space {
            Space::ExactPf => {
                let sols = match self.solve_exact(a) {
                    Ok(s) => s,
                    Err(Error::Divergence(msg)) => {
                        return Ok(Evaluation {
                            objective: f64::NAN,
                            violation: Some(format!("power flow diverged: {msg}")),
                        })
                    }
                    Err(e) => return Err(e),
                };
                let objective = self.pipeline.exact(&sols).unwrap_or(f64::NAN);
                Ok(Evaluation { objective, violation: self.exact_violation(&sols) })
            }
            Space::Ld3f => {
                let sols = self.solve_ld3f(a)?;
                let objective = match self.pipeline.ld3f(&sols) {
                    Ok(v) => v,
                    Err(e @ Error::Unsupported(_)) => return Err(e),
                    Err(_) => f64::NAN,
                };
                Ok(Evaluation { objective, violation: self.ld3f_violation(&sols) })
            }
        }
    }

    pub fn exact_violation(&self, sols: &[PfSolution]) -> Option<String> {
        let f = &self.feeder;
        let c = &self.constraints;
        for (t, s) in sols.iter().enumerate() {
            if !s.converged {
                return Some(format!("power flow did not converge at step {t}"));
            }
            for b in (0..f.buses.len()).filter(|&b| b != f.reference_bus) {
                for (ph, m) in s.magnitudes(b).iter().enumerate() {
                    if *m < c.v_min || *m > c.v_max {
                        return Some(format!(
                            "step {t}: |u| = {m:.4} pu at bus {}, phase {} outside [{}, {}]",
                            f.buses[b],
                            ph + 1,
                            c.v_min,
                            c.v_max
                        ));
                    }
                }
            }
            for (k, br) in f.branches.iter().enumerate() {
                for ph in 0..3 {
                    if let Some(limit) = br.power_limit {
                        let va = s.flow_from[k][ph].norm() * f.base_power;
                        if va > limit {
                            return Some(format!("step {t}: branch {k} phase {} carries {va:.0} VA > {limit}", ph + 1));
                        }
                    }
                    if let Some(amps) = br.ampacity {
                        let i = s.currents[k][ph].norm() * f.i_base();
                        if i > amps {
                            return Some(format!("step {t}: branch {k} phase {} carries {i:.1} A > {amps}", ph + 1));
                        }
                    }
                }
            }
        }
        None
    }

    pub fn ld3f_violation(&self, sols: &[Ld3fSolution]) -> Option<String> {
        let f = &self.feeder;
        let c = &self.constraints;
        let (lo, hi) = (c.v_min * c.v_min, c.v_max * c.v_max);
        let limits: Vec<Option<f64>> = (0..f.branches.len()).map(|k| thermal_limit_va(f, k)).collect();
        for (t, s) in sols.iter().enumerate() {
            for b in (0..f.buses.len()).filter(|&b| b != f.reference_bus) {
                for (ph, w) in s.omega[b].iter().enumerate() {
                    if *w < lo || *w > hi {
                        return Some(format!(
                            "step {t}: ω = {w:.4} pu at bus {}, phase {} outside [{lo:.4}, {hi:.4}]",
                            f.buses[b],
                            ph + 1
                        ));
                    }
                }
            }
            for (k, limit) in limits.iter().enumerate() {
                if let Some(limit) = limit {
                    let lim = limit / f.base_power;
                    for ph in 0..3 {
                        if s.p[k][ph].abs() > lim || s.q[k][ph].abs() > lim {
                            return Some(format!("step {t}: branch {k} phase {} exceeds {limit} VA box", ph + 1));
                        }
                    }
                }
            }
        }
        None
    }

    /// All metrics on the exact power flow of `a`.
    pub fn metric_table(&self, a: &PhaseAssignment) -> Result<MetricTable> {
        let sols = self.solve_exact(a)?;
        Ok(MetricTable::from_exact(&self.feeder, &self.loads, self.spec(), &sols))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::metrics::Metric;

    fn problem_b(metric: Metric) -> Problem {
        let (feeder, loads) = fixtures::fixture_b();
        let cfg = ConstraintConfig::new(&feeder, 3);
        let spec = ObjectiveSpec::new(&feeder, metric);
        Problem::new(feeder, loads, cfg, spec).unwrap()
    }

    #[test]
    fn original_is_operationally_feasible() {
        for m in [Metric::PU, Metric::PvurStar] {
            let p = problem_b(m);
            for space in [Space::ExactPf, Space::Ld3f] {
                let e = p.evaluate(&p.original(), space).unwrap();
                assert!(e.feasible(), "{m} {space}: {e:?}");
                assert!(e.objective > 0.0);
            }
        }
    }

    #[test]
    fn tight_voltage_band_is_flagged() {
        let mut p = problem_b(Metric::PU);
        p.constraints.v_min = 0.9999;
        let e = p.evaluate(&p.original(), Space::ExactPf).unwrap();
        assert!(e.violation.unwrap().contains("outside"));
        let e = p.evaluate(&p.original(), Space::Ld3f).unwrap();
        assert!(e.violation.is_some());
    }

    #[test]
    fn space_names() {
        assert_eq!("exact-pf".parse::<Space>().unwrap(), Space::ExactPf);
        assert_eq!("LD3F".parse::<Space>().unwrap(), Space::Ld3f);
        assert!("dc".parse::<Space>().is_err());
    }
}
