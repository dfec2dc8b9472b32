use nalgebra::{DMatrix, DVector, Dyn, Matrix3, LU};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{demand_at, Feeder, LoadSeries, Phase, PhaseAssignment};
use crate::pf_exact::ybus::build_ybus;

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PfOptions {
    /// Convergence threshold on the ∞-norm of the nodal power mismatch, pu.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 100 }
    }
}

/// Balanced reference phasors 1∠0°, 1∠−120°, 1∠120°.
pub fn reference_voltages() -> [C; 3] {
    let a = -2.0 * std::f64::consts::PI / 3.0;
    [C::new(1.0, 0.0), C::from_polar(1.0, a), C::from_polar(1.0, -a)]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PfSolution {
    /// Bus voltages, pu.
    pub voltages: Vec<[C; 3]>,
    /// Series current of each branch in its `from -> to` direction, pu.
    pub currents: Vec<[C; 3]>,
    /// Power entering each branch at its `from` end, pu.
    pub flow_from: Vec<[C; 3]>,
    /// Power entering each branch at its `to` end, pu (negative of delivered power).
    pub flow_to: Vec<[C; 3]>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PfSolution {
    pub fn magnitudes(&self, bus: usize) -> [f64; 3] {
        let v = &self.voltages[bus];
        [v[0].norm(), v[1].norm(), v[2].norm()]
    }

    /// Squared magnitudes, the exact counterpart of the linearized ω.
    pub fn squared_magnitudes(&self, bus: usize) -> [f64; 3] {
        let v = &self.voltages[bus];
        [v[0].norm_sqr(), v[1].norm_sqr(), v[2].norm_sqr()]
    }
}

/// Power-flow engine for one feeder: `Y` and the factorization of its non-reference block
/// are computed once and shared by every solve.
#[derive(Debug, Clone)]
pub struct PfSolver {
    n_bus: usize,
    reference: usize,
    /// Position of bus `b` in the reduced system (`None` for the reference).
    slot: Vec<Option<usize>>,
    ybus: DMatrix<C>,
    lu: LU<C, Dyn, Dyn>,
    /// `Y_nr · u_r`, constant.
    reference_current: DVector<C>,
    branch_admittance: Vec<Matrix3<C>>,
    ends: Vec<(usize, usize)>,
}

impl PfSolver {
    pub fn new(feeder: &Feeder) -> Result<PfSolver> {
        let y = build_ybus(feeder)?;
        let n_bus = feeder.buses.len();
        let reference = feeder.reference_bus;
        let mut slot = vec![None; n_bus];
        let mut next = 0;
        for (b, s) in slot.iter_mut().enumerate() {
            if b != reference {
                *s = Some(next);
                next += 1;
            }
        }
        let m = 3 * (n_bus - 1);
        let node = |b: usize, p: usize| 3 * slot[b].unwrap() + p;
        let mut ynn = DMatrix::from_element(m, m, ZERO);
        let mut ynr = DMatrix::from_element(m, 3, ZERO);
        for bi in (0..n_bus).filter(|&b| b != reference) {
            for pi in 0..3 {
                let row = 3 * bi + pi;
                for bj in 0..n_bus {
                    for pj in 0..3 {
                        let v = y.matrix[(row, 3 * bj + pj)];
                        if bj == reference {
                            ynr[(node(bi, pi), pj)] = v;
                        } else {
                            ynn[(node(bi, pi), node(bj, pj))] = v;
                        }
                    }
                }
            }
        }
        let ur = DVector::from_column_slice(&reference_voltages());
        let reference_current = &ynr * ur;
        let lu = ynn.lu();
        if m > 0 && lu.u().diagonal().iter().any(|d| d.norm() == 0.0) {
            return Err(Error::Validation("reduced admittance matrix is singular".into()));
        }
        Ok(PfSolver {
            n_bus,
            reference,
            slot,
            ybus: y.matrix,
            lu,
            reference_current,
            branch_admittance: y.branch_admittance,
            ends: feeder.branches.iter().map(|b| (b.from, b.to)).collect(),
        })
    }

    /// Solves for one demand snapshot (`demand[bus][phase]`, pu, positive = consumption).
    /// `start` overrides the flat start. Non-convergence is reported in the solution;
    /// a vanishing voltage is an error.
    pub fn solve(&self, demand: &[[C; 3]], options: &PfOptions, start: Option<&[[C; 3]]>) -> Result<PfSolution> {
        if !(options.tol > 0.0) {
            return Err(Error::Validation("power-flow tolerance must be positive".into()));
        }
        let uref = reference_voltages();
        let mut u: Vec<[C; 3]> = match start {
            Some(s) => s.to_vec(),
            None => vec![uref; self.n_bus],
        };
        u[self.reference] = uref;

        let mut mismatch = self.mismatch(&u, demand);
        let mut iterations = 0;
        let m = 3 * (self.n_bus - 1);
        let mut rhs = DVector::from_element(m, ZERO);
        while mismatch > options.tol && iterations < options.max_iter {
            iterations += 1;
            for b in 0..self.n_bus {
                if let Some(s) = self.slot[b] {
                    for p in 0..3 {
                        // Load current drawn from the node, as an injection.
                        let i_inj = -(demand[b][p] / u[b][p]).conj();
                        rhs[3 * s + p] = i_inj - self.reference_current[3 * s + p];
                    }
                }
            }
            if m > 0 {
                self.lu.solve_mut(&mut rhs);
            }
            for b in 0..self.n_bus {
                if let Some(s) = self.slot[b] {
                    for p in 0..3 {
                        let v = rhs[3 * s + p];
                        if !(v.norm() > 1e-9) {
                            return Err(Error::Divergence(format!(
                                "voltage collapsed at bus index {b}, phase {}",
                                p + 1
                            )));
                        }
                        u[b][p] = v;
                    }
                }
            }
            mismatch = self.mismatch(&u, demand);
        }

        let mut currents = Vec::with_capacity(self.ends.len());
        let mut flow_from = Vec::with_capacity(self.ends.len());
        let mut flow_to = Vec::with_capacity(self.ends.len());
        for (k, &(i, j)) in self.ends.iter().enumerate() {
            let y = &self.branch_admittance[k];
            let mut cur = [ZERO; 3];
            let mut sf = [ZERO; 3];
            let mut st = [ZERO; 3];
            for a in 0..3 {
                for b in 0..3 {
                    cur[a] += y[(a, b)] * (u[i][b] - u[j][b]);
                }
            }
            for a in 0..3 {
                sf[a] = u[i][a] * cur[a].conj();
                st[a] = -u[j][a] * cur[a].conj();
            }
            currents.push(cur);
            flow_from.push(sf);
            flow_to.push(st);
        }
        Ok(PfSolution {
            voltages: u,
            currents,
            flow_from,
            flow_to,
            converged: mismatch <= options.tol,
            iterations,
            max_mismatch: mismatch,
        })
    }

    /// ∞-norm of `u ⊙ conj(Y u) + demand` over non-reference nodes.
    fn mismatch(&self, u: &[[C; 3]], demand: &[[C; 3]]) -> f64 {
        let n = 3 * self.n_bus;
        let mut worst: f64 = 0.0;
        for row in 0..n {
            let (b, p) = (row / 3, row % 3);
            if b == self.reference {
                continue;
            }
            let mut cur = ZERO;
            for col in 0..n {
                let y = self.ybus[(row, col)];
                if y != ZERO {
                    cur += y * u[col / 3][col % 3];
                }
            }
            let s = u[b][p] * cur.conj();
            let m = (s + demand[b][p]).norm();
            if m.is_nan() {
                return f64::INFINITY;
            }
            worst = worst.max(m);
        }
        worst
    }

    /// Solves every timestep independently from a flat start.
    pub fn solve_series(
        &self,
        feeder: &Feeder,
        phases: &[Phase],
        loads: &LoadSeries,
        options: &PfOptions,
    ) -> Result<Vec<PfSolution>> {
        (0..loads.horizon())
            .map(|t| {
                let demand = demand_at(feeder, phases, loads, t, feeder.base_power);
                self.solve(&demand, options, None)
            })
            .collect()
    }
}

/// One-shot solve of step `t` (builds the solver; prefer [`PfSolver`] in loops).
pub fn solve_pf(
    feeder: &Feeder,
    assignment: &PhaseAssignment,
    loads: &LoadSeries,
    t: usize,
    options: &PfOptions,
) -> Result<PfSolution> {
    let phases = assignment.user_phases(feeder)?;
    loads.check_against(feeder)?;
    if t >= loads.horizon() {
        return Err(Error::Validation(format!("timestep {t} outside horizon")));
    }
    let solver = PfSolver::new(feeder)?;
    let demand = demand_at(feeder, &phases, loads, t, feeder.base_power);
    solver.solve(&demand, options, None)
}

/// Solves all timesteps; convergence is flagged per solution.
pub fn solve_series(
    feeder: &Feeder,
    assignment: &PhaseAssignment,
    loads: &LoadSeries,
    options: &PfOptions,
) -> Result<Vec<PfSolution>> {
    let phases = assignment.user_phases(feeder)?;
    loads.check_against(feeder)?;
    PfSolver::new(feeder)?.solve_series(feeder, &phases, loads, options)
}

fn loss_and_supply(sol: &PfSolution, feeder: &Feeder) -> (f64, f64) {
    let loss: f64 =
        sol.flow_from.iter().zip(&sol.flow_to).flat_map(|(f, t)| (0..3).map(move |p| (f[p] + t[p]).re)).sum();
    let supply: f64 = feeder.head_branches().iter().flat_map(|&k| sol.flow_from[k].iter().map(|s| s.re)).sum();
    (loss, supply)
}

/// Active losses as a percentage of the active power supplied at the reference bus.
/// A snapshot with no flow at all has 0 % losses.
pub fn losses(sol: &PfSolution, feeder: &Feeder) -> Result<f64> {
    let (loss, supply) = loss_and_supply(sol, feeder);
    ratio(loss, supply)
}

/// Energy-weighted loss percentage over a horizon.
pub fn losses_over(solutions: &[PfSolution], feeder: &Feeder) -> Result<f64> {
    let (loss, supply) =
        solutions.iter().map(|s| loss_and_supply(s, feeder)).fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    ratio(loss, supply)
}

fn ratio(loss: f64, supply: f64) -> Result<f64> {
    if supply.abs() <= 1e-12 {
        if loss.abs() <= 1e-12 {
            return Ok(0.0);
        }
        return Err(Error::Metric("loss fraction undefined: zero active injection at the reference bus".into()));
    }
    Ok(100.0 * loss / supply)
}
