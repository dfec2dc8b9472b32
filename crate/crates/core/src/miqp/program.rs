use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ld3f::AffineSensitivity;
use crate::metrics::Metric;
use crate::netmodel::Phase;
use crate::problem::{thermal_limit_va, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }

    /// Amount by which `activity` violates `activity <sense> rhs` (0 if satisfied).
    pub fn violation(self, activity: f64, rhs: f64) -> f64 {
        match self {
            Sense::Le => (activity - rhs).max(0.0),
            Sense::Ge => (rhs - activity).max(0.0),
            Sense::Eq => (activity - rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    OneHot,
    Budget,
    PhaseCount,
    Voltage,
    Thermal,
    Epigraph,
}

impl RowKind {
    /// Rows added to relaxations on demand.
    pub fn is_lazy(self) -> bool {
        matches!(self, RowKind::Voltage | RowKind::Thermal | RowKind::Epigraph)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub kind: RowKind,
    /// `(variable, coefficient)`, ascending by variable.
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `linearᵀx + δᵀQδ + constant`; `Q` only touches the binaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Objective {
    pub linear: Vec<f64>,
    pub quadratic: Option<DMatrix<f64>>,
    pub constant: f64,
}

/// Pure binary program over `δ[slot][phase]` (variable `3·slot + phase`) plus, for the
/// epigraph form, one continuous `m_t ≥ 0` per timestep (variables after the binaries).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProgram {
    pub metric: Metric,
    /// User id of every slot.
    pub slot_ids: Vec<String>,
    pub original: Vec<Phase>,
    pub delta_max: usize,
    pub n_aux: usize,
    pub objective: Objective,
    pub rows: Vec<Row>,
}

fn lp_name(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' }).collect()
}

impl BinaryProgram {
    pub fn n_slots(&self) -> usize {
        self.slot_ids.len()
    }

    pub fn n_binaries(&self) -> usize {
        3 * self.slot_ids.len()
    }

    pub fn n_vars(&self) -> usize {
        self.n_binaries() + self.n_aux
    }

    pub fn var_name(&self, j: usize) -> String {
        let nb = self.n_binaries();
        if j < nb {
            format!("d_{}_{}", lp_name(&self.slot_ids[j / 3]), j % 3 + 1)
        } else {
            format!("m_{}", j - nb)
        }
    }

    /// Binary activity of a row at an integer point (auxiliaries excluded).
    pub fn binary_activity(&self, row: &Row, phases: &[Phase]) -> f64 {
        let nb = self.n_binaries();
        row.coeffs.iter().filter(|(j, _)| *j < nb && phases[j / 3].index() == j % 3).map(|(_, a)| a).sum()
    }

    /// Smallest feasible auxiliaries at an integer point.
    pub fn aux_values(&self, phases: &[Phase]) -> Vec<f64> {
        let nb = self.n_binaries();
        let mut m = vec![0.0f64; self.n_aux];
        for row in self.rows.iter().filter(|r| r.kind == RowKind::Epigraph) {
            // a·δ − m_t ≤ rhs.
            let t = row.coeffs.iter().find(|(j, _)| *j >= nb).map(|(j, _)| j - nb).unwrap();
            m[t] = m[t].max(self.binary_activity(row, phases) - row.rhs);
        }
        m
    }

    /// Objective at an integer point (auxiliaries at their tight values).
    pub fn evaluate(&self, phases: &[Phase]) -> f64 {
        let nb = self.n_binaries();
        let mut v = self.objective.constant;
        for (s, p) in phases.iter().enumerate() {
            v += self.objective.linear[3 * s + p.index()];
        }
        for (t, m) in self.aux_values(phases).iter().enumerate() {
            v += self.objective.linear[nb + t] * m;
        }
        if let Some(q) = &self.objective.quadratic {
            let idx: Vec<usize> = phases.iter().enumerate().map(|(s, p)| 3 * s + p.index()).collect();
            for &i in &idx {
                for &j in &idx {
                    v += q[(i, j)];
                }
            }
        }
        v
    }

    /// First violated non-epigraph row at an integer point (tolerance `tol`).
    pub fn violated_row(&self, phases: &[Phase], tol: f64) -> Option<&Row> {
        self.rows
            .iter()
            .filter(|r| r.kind != RowKind::Epigraph)
            .find(|r| r.sense.violation(self.binary_activity(r, phases), r.rhs) > tol * (1.0 + r.rhs.abs()))
    }

    pub fn switches(&self, phases: &[Phase]) -> usize {
        phases.iter().zip(&self.original).filter(|(a, b)| a != b).count()
    }
}

fn sparse(coeffs: impl IntoIterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    coeffs.into_iter().filter(|(_, a)| *a != 0.0).collect()
}

/// Range of `Σ coeffs·δ` over one-hot choices of every slot.
fn activity_range(coeffs: &[[f64; 3]]) -> (f64, f64) {
    coeffs.iter().fold((0.0, 0.0), |(lo, hi), c| (lo + c[0].min(c[1]).min(c[2]), hi + c[0].max(c[1]).max(c[2])))
}

fn rows_from_affine(
    rows: &mut Vec<Row>,
    kind: RowKind,
    name: String,
    coeffs: &[[f64; 3]],
    base: f64,
    lo: f64,
    hi: f64,
) {
    // lo ≤ base + a·δ ≤ hi; rows that cannot bind for any one-hot δ are dropped.
    let (amin, amax) = activity_range(coeffs);
    let flat = || sparse(coeffs.iter().enumerate().flat_map(|(s, c)| (0..3).map(move |p| (3 * s + p, c[p]))));
    if base + amax > hi {
        rows.push(Row { name: format!("{name}_hi"), kind, coeffs: flat(), sense: Sense::Le, rhs: hi - base });
    }
    if base + amin < lo {
        rows.push(Row { name: format!("{name}_lo"), kind, coeffs: flat(), sense: Sense::Ge, rhs: lo - base });
    }
}

/// Eliminates the LD3F variables into a program over the phase binaries.
/// Only the proxies PVUR* (epigraph, linear) and P_U* (convex quadratic) are representable.
pub fn build_program(problem: &Problem, sens: &AffineSensitivity) -> Result<BinaryProgram> {
    let metric = problem.spec().metric;
    if !metric.is_proxy() {
        return Err(Error::Unsupported(format!(
            "{metric} is not representable as a linear or quadratic function of the LD3F variables; use PVUR* or P_U*"
        )));
    }
    let feeder = &problem.feeder;
    let cfg = &problem.constraints;
    let n = sens.num_slots();
    if n != feeder.reconfigurable_users().len() || sens.horizon() != problem.loads.horizon() {
        return Err(Error::Validation("sensitivity does not match the problem".into()));
    }
    let horizon = sens.horizon();
    let nb = 3 * n;
    let slot_ids: Vec<String> = (0..n).map(|s| feeder.users[sens.user_of(s)].id.clone()).collect();
    let original: Vec<Phase> = (0..n).map(|s| feeder.users[sens.user_of(s)].original_phase).collect();
    let mut rows = Vec::new();

    for s in 0..n {
        rows.push(Row {
            name: format!("onehot_{}", lp_name(&slot_ids[s])),
            kind: RowKind::OneHot,
            coeffs: (0..3).map(|p| (3 * s + p, 1.0)).collect(),
            sense: Sense::Eq,
            rhs: 1.0,
        });
    }
    // Σ_s (1 − δ[s][c0_s]) ≤ Δ.
    rows.push(Row {
        name: "budget".into(),
        kind: RowKind::Budget,
        coeffs: (0..n).map(|s| (3 * s + original[s].index(), -1.0)).collect(),
        sense: Sense::Le,
        rhs: cfg.delta_max as f64 - n as f64,
    });
    if cfg.enforce_phase_counts {
        let mut fixed = [0usize; 3];
        let reconf = feeder.reconfigurable_users();
        for (u, user) in feeder.users.iter().enumerate() {
            if !reconf.contains(&u) {
                fixed[user.original_phase.index()] += 1;
            }
        }
        for p in 0..3 {
            let coeffs: Vec<(usize, f64)> = (0..n).map(|s| (3 * s + p, 1.0)).collect();
            rows.push(Row {
                name: format!("phase{}_min", p + 1),
                kind: RowKind::PhaseCount,
                coeffs: coeffs.clone(),
                sense: Sense::Ge,
                rhs: cfg.gamma_low as f64 - fixed[p] as f64,
            });
            rows.push(Row {
                name: format!("phase{}_max", p + 1),
                kind: RowKind::PhaseCount,
                coeffs,
                sense: Sense::Le,
                rhs: cfg.gamma_upp as f64 - fixed[p] as f64,
            });
        }
    }

    let (wlo, whi) = (cfg.v_min * cfg.v_min, cfg.v_max * cfg.v_max);
    for t in 0..horizon {
        for b in (0..feeder.buses.len()).filter(|&b| b != feeder.reference_bus) {
            for ph in 0..3 {
                let coeffs: Vec<[f64; 3]> = (0..n).map(|s| Phase::ALL.map(|c| sens.d_omega(s, c, b, t)[ph])).collect();
                rows_from_affine(
                    &mut rows,
                    RowKind::Voltage,
                    format!("v_{}_{}_{t}", lp_name(&feeder.buses[b]), ph + 1),
                    &coeffs,
                    sens.omega0[b][t][ph],
                    wlo,
                    whi,
                );
            }
        }
        for k in 0..feeder.branches.len() {
            let Some(limit) = thermal_limit_va(feeder, k) else { continue };
            let lim = limit / feeder.base_power;
            for ph in 0..3 {
                for (which, base) in [("p", sens.p0[k][t][ph]), ("q", sens.q0[k][t][ph])] {
                    let coeffs: Vec<[f64; 3]> = (0..n)
                        .map(|s| {
                            Phase::ALL.map(|c| {
                                let (dp, dq) = sens.d_flow(s, c, k, t);
                                if which == "p" {
                                    dp[ph]
                                } else {
                                    dq[ph]
                                }
                            })
                        })
                        .collect();
                    rows_from_affine(
                        &mut rows,
                        RowKind::Thermal,
                        format!("th_{k}_{which}{}_{t}", ph + 1),
                        &coeffs,
                        base,
                        -lim,
                        lim,
                    );
                }
            }
        }
    }

    let objective = match metric {
        Metric::PvurStar => {
            for t in 0..horizon {
                for &b in &problem.spec().balance_buses {
                    let base = sens.omega0[b][t];
                    let base_mean = (base[0] + base[1] + base[2]) / 3.0;
                    let cols: Vec<[[f64; 3]; 3]> =
                        (0..n).map(|s| Phase::ALL.map(|c| sens.d_omega(s, c, b, t))).collect();
                    for ph in 0..3 {
                        // 100·(ω_φ − ⟨ω⟩) as an affine function of δ.
                        let coef: Vec<(usize, f64)> = cols
                            .iter()
                            .enumerate()
                            .flat_map(|(s, col)| {
                                (0..3).map(move |c| {
                                    let d = col[c];
                                    (3 * s + c, 100.0 * (d[ph] - (d[0] + d[1] + d[2]) / 3.0))
                                })
                            })
                            .collect();
                        let constant = 100.0 * (base[ph] - base_mean);
                        let name = format!("epi_{}_{}_{t}", lp_name(&feeder.buses[b]), ph + 1);
                        for (sign, tag) in [(1.0, "pos"), (-1.0, "neg")] {
                            let mut c = sparse(coef.iter().map(|&(j, a)| (j, sign * a)));
                            c.push((nb + t, -1.0));
                            rows.push(Row {
                                name: format!("{name}_{tag}"),
                                kind: RowKind::Epigraph,
                                coeffs: c,
                                sense: Sense::Le,
                                rhs: -sign * constant,
                            });
                        }
                    }
                }
            }
            let mut linear = vec![0.0; nb + horizon];
            for l in linear.iter_mut().skip(nb) {
                *l = 1.0 / horizon as f64;
            }
            Objective { linear, quadratic: None, constant: 0.0 }
        }
        Metric::PUStar => {
            let lap = Matrix3::new(2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0);
            let branches = &problem.spec().balance_branches;
            let denoms = problem.pipeline().denominators();
            let mut q = DMatrix::zeros(nb, nb);
            let mut linear = vec![0.0; nb];
            let mut constant = 0.0;
            for (e_pos, &e) in branches.iter().enumerate() {
                let w = 100.0 / (horizon as f64 * branches.len() as f64 * denoms[e_pos] * denoms[e_pos]);
                let down: Vec<usize> = (0..n).filter(|&s| sens.is_downstream(e, s)).collect();
                for t in 0..horizon {
                    let p0 = nalgebra::Vector3::from(sens.p0[e][t]);
                    let lp0 = lap * p0;
                    constant += w * p0.dot(&lp0);
                    for &u in &down {
                        let pu = sens.p_hat(u, t);
                        for a in 0..3 {
                            linear[3 * u + a] += w * 2.0 * pu * lp0[a];
                        }
                        for &v in &down {
                            let g = w * pu * sens.p_hat(v, t);
                            for a in 0..3 {
                                for b in 0..3 {
                                    q[(3 * u + a, 3 * v + b)] += g * lap[(a, b)];
                                }
                            }
                        }
                    }
                }
            }
            Objective { linear, quadratic: Some(q), constant }
        }
        _ => unreachable!(),
    };

    Ok(BinaryProgram {
        metric,
        slot_ids,
        original,
        delta_max: cfg.delta_max,
        n_aux: if metric == Metric::PvurStar { horizon } else { 0 },
        objective,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::ld3f::sensitivity;
    use crate::metrics::ObjectiveSpec;
    use crate::netmodel::{ConstraintConfig, PhaseAssignment};
    use crate::problem::Space;

    fn program_b(metric: Metric, delta: usize) -> (Problem, BinaryProgram) {
        let (feeder, loads) = fixtures::fixture_b();
        let cfg = ConstraintConfig::new(&feeder, delta);
        let spec = ObjectiveSpec::new(&feeder, metric);
        let p = Problem::new(feeder, loads, cfg, spec).unwrap();
        let sens = sensitivity(&p.feeder, &p.loads).unwrap();
        let prog = build_program(&p, &sens).unwrap();
        (p, prog)
    }

    fn all_27() -> Vec<PhaseAssignment> {
        (0..27u32)
            .map(|c| {
                PhaseAssignment::from_numbers(&[(c / 9 + 1) as u8, (c / 3 % 3 + 1) as u8, (c % 3 + 1) as u8]).unwrap()
            })
            .collect()
    }

    #[test]
    fn budget_row_substitution() {
        let (_, prog) = program_b(Metric::PvurStar, 1);
        let row = prog.rows.iter().find(|r| r.kind == RowKind::Budget).unwrap();
        assert_eq!(row.coeffs, vec![(0, -1.0), (3, -1.0), (6, -1.0)]);
        assert_eq!((row.sense, row.rhs), (Sense::Le, -2.0));
    }

    #[test]
    fn objective_matches_ld3f_pipeline_on_every_assignment() {
        for metric in [Metric::PvurStar, Metric::PUStar] {
            let (p, prog) = program_b(metric, 3);
            for a in all_27() {
                let direct = p.evaluate(&a, Space::Ld3f).unwrap().objective;
                let v = prog.evaluate(a.phases());
                assert!((v - direct).abs() <= 1e-8 * (1.0 + direct.abs()), "{metric} {a:?}: {v} vs {direct}");
            }
        }
    }

    #[test]
    fn quadratic_form_is_psd() {
        let (_, prog) = program_b(Metric::PUStar, 3);
        let q = prog.objective.quadratic.unwrap();
        assert!((&q - q.transpose()).amax() < 1e-12);
        let eig = q.symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-9 * eig.eigenvalues.amax()));
    }

    #[test]
    fn exact_metrics_are_rejected() {
        let (feeder, loads) = fixtures::fixture_b();
        let cfg = ConstraintConfig::new(&feeder, 3);
        let spec = ObjectiveSpec::new(&feeder, Metric::Pvur);
        let p = Problem::new(feeder, loads, cfg, spec).unwrap();
        let sens = sensitivity(&p.feeder, &p.loads).unwrap();
        assert!(matches!(build_program(&p, &sens), Err(Error::Unsupported(_))));
    }

    #[test]
    fn no_binaries_gives_constant_program() {
        let (feeder, loads) = fixtures::fixture_b();
        let mut file = feeder.to_file();
        for u in &mut file.users {
            u.reconfigurable = false;
        }
        let feeder = crate::netmodel::Feeder::from_file(file).unwrap();
        let cfg = ConstraintConfig::new(&feeder, 0);
        let spec = ObjectiveSpec::new(&feeder, Metric::PvurStar);
        let p = Problem::new(feeder, loads, cfg, spec).unwrap();
        let sens = sensitivity(&p.feeder, &p.loads).unwrap();
        let prog = build_program(&p, &sens).unwrap();
        assert_eq!(prog.n_binaries(), 0);
        let direct = p.evaluate(&p.original(), Space::Ld3f).unwrap().objective;
        assert!((prog.evaluate(&[]) - direct).abs() < 1e-10);
    }
}
