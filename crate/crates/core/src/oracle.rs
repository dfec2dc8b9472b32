//! Exhaustive search over every assignment within the switching budget.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Phase, PhaseAssignment};
use crate::problem::{Problem, Space};

pub const DEFAULT_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    /// Position in lexicographic enumeration order.
    pub index: usize,
    pub assignment: PhaseAssignment,
    pub objective: f64,
    pub feasible: bool,
    pub violation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: PhaseAssignment,
    pub objective: f64,
    /// Feasible entries first, then by objective, then by enumeration index.
    pub ranked: Vec<RankedEntry>,
    /// Candidates before the phase-count filter.
    pub enumerated: usize,
}

fn binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// `Σ_{k ≤ Δ} C(n, k)·2^k`: assignments of `n` users with at most `delta_max` switches.
pub fn search_space_size(n: usize, delta_max: usize) -> u128 {
    let n = n as u128;
    (0..=(delta_max as u128).min(n))
        .map(|k| binomial(n, k).saturating_mul(1u128.checked_shl(k as u32).unwrap_or(u128::MAX)))
        .fold(0u128, u128::saturating_add)
}

/// Lexicographic enumeration (phases 1 < 2 < 3 per position) under the budget.
pub fn enumerate_assignments(original: &[Phase], delta_max: usize) -> Vec<Vec<Phase>> {
    fn rec(original: &[Phase], left: usize, cur: &mut Vec<Phase>, out: &mut Vec<Vec<Phase>>) {
        let s = cur.len();
        if s == original.len() {
            out.push(cur.clone());
            return;
        }
        for p in Phase::ALL {
            let switch = p != original[s];
            if switch && left == 0 {
                continue;
            }
            cur.push(p);
            rec(original, left - usize::from(switch), cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(original, delta_max, &mut Vec::with_capacity(original.len()), &mut out);
    out
}

/// Scores every candidate allowed by the binary constraints in `space` and ranks them.
pub fn enumerate_optimal(problem: &Problem, space: Space, cap: u128) -> Result<OracleResult> {
    let original = problem.original();
    let size = search_space_size(original.len(), problem.constraints.delta_max);
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let all = enumerate_assignments(original.phases(), problem.constraints.delta_max);
    let enumerated = all.len();
    let mut candidates = Vec::with_capacity(enumerated);
    for (index, phases) in all.into_iter().enumerate() {
        let a = PhaseAssignment::new(phases);
        if problem.binary_violation(&a)?.is_none() {
            candidates.push((index, a));
        }
    }
    let scored: Vec<Result<RankedEntry>> = candidates
        .into_par_iter()
        .map(|(index, assignment)| {
            let e = problem.evaluate(&assignment, space)?;
            let violation = if e.objective.is_nan() {
                Some(e.violation.unwrap_or_else(|| "objective undefined".into()))
            } else {
                e.violation
            };
            Ok(RankedEntry { index, assignment, objective: e.objective, feasible: violation.is_none(), violation })
        })
        .collect();
    let mut ranked = scored.into_iter().collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        b.feasible.cmp(&a.feasible).then(a.objective.total_cmp(&b.objective)).then(a.index.cmp(&b.index))
    });
    match ranked.first() {
        Some(top) if top.feasible => {
            Ok(OracleResult { best: top.assignment.clone(), objective: top.objective, ranked, enumerated })
        }
        Some(top) => Err(Error::Infeasible {
            rows: vec![format!(
                "all {} enumerated assignments violate operational limits; first: {}",
                ranked.len(),
                top.violation.as_deref().unwrap_or("?")
            )],
        }),
        None => Err(Error::Infeasible {
            rows: vec!["phase-count bounds exclude every assignment within the budget".into()],
        }),
    }
}

/// CSV with header `rank,index,assignment,objective,feasible,violation`.
pub fn write_ranked_csv<W: Write>(ranked: &[RankedEntry], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
    w.write_record(["rank", "index", "assignment", "objective", "feasible", "violation"]).map_err(csv_err)?;
    for (rank, e) in ranked.iter().enumerate() {
        let digits: String = e.assignment.numbers().iter().map(|n| char::from(b'0' + n)).collect();
        w.write_record([
            (rank + 1).to_string(),
            e.index.to_string(),
            digits,
            format!("{}", e.objective),
            e.feasible.to_string(),
            e.violation.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))?;
    Ok(())
}
