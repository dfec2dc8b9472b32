//! Best-first branch-and-bound with 3-way branching per user.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::miqp::program::{BinaryProgram, Row, RowKind, Sense};
use crate::miqp::qp::QpProblem;
use crate::miqp::simplex::{solve_lp, LpRow, LpStatus};
use crate::netmodel::{Phase, PhaseAssignment};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BnbStatus {
    Optimal,
    NodeLimit,
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branching {
    /// User whose relaxed phase weights are furthest from one-hot.
    MostFractional,
    /// Lowest-index free user.
    FirstFree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relaxation {
    /// Simplex for linear objectives, projected gradient for quadratic ones.
    Auto,
    Simplex,
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BnbOptions {
    pub abs_gap: f64,
    pub rel_gap: f64,
    pub node_limit: usize,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    pub relaxation: Relaxation,
    /// Iteration cap of the projected-gradient subsolver.
    pub qp_max_iter: usize,
    /// Optional starting incumbent (ignored when infeasible).
    pub warm_start: Option<Vec<Phase>>,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            abs_gap: 1e-9,
            rel_gap: 1e-6,
            node_limit: 100_000,
            time_limit: None,
            branching: Branching::MostFractional,
            relaxation: Relaxation::Auto,
            qp_max_iter: 3000,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnbResult {
    pub assignment: PhaseAssignment,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub status: BnbStatus,
    /// One line per logged event: node count, bound, incumbent, gap.
    pub log: Vec<String>,
}

struct Node {
    fixed: Vec<Option<Phase>>,
    bound: f64,
    seq: usize,
    /// Parent relaxation point per slot, used as a warm start.
    warm: Option<Vec<[f64; 3]>>,
    cuts: Vec<usize>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Max-heap order: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

const ROW_TOL: f64 = 1e-9;

struct Relaxed {
    bound: f64,
    /// Phase weights of the free slots (in free order).
    x: Option<Vec<[f64; 3]>>,
    /// LP solution already satisfies every row and is integral.
    integral: bool,
    /// Lazy rows binding at the LP optimum, handed down to the children.
    cuts: Vec<usize>,
}

struct Search<'a> {
    prog: &'a BinaryProgram,
    opts: &'a BnbOptions,
    quadratic: bool,
    incumbent: Option<(Vec<Phase>, f64)>,
    log: Vec<String>,
    nodes: usize,
}

fn fmt_log(nodes: usize, bound: f64, inc: Option<f64>, gap: f64) -> String {
    match inc {
        Some(v) => format!("node {nodes:>7}  bound {bound:>14.9}  incumbent {v:>14.9}  gap {gap:.3e}"),
        None => format!("node {nodes:>7}  bound {bound:>14.9}  incumbent {:>14}  gap {:>9}", "-", "-"),
    }
}

impl<'a> Search<'a> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((_, v)) => v - self.opts.abs_gap.max(self.opts.rel_gap * v.abs()),
            None => f64::INFINITY,
        }
    }

    fn feasible_point(&self, phases: &[Phase]) -> bool {
        self.prog.switches(phases) <= self.prog.delta_max && self.prog.violated_row(phases, ROW_TOL).is_none()
    }

    /// Offers a feasible point; improves it by single moves when it becomes the incumbent.
    fn offer(&mut self, phases: Vec<Phase>, bound_hint: f64) {
        let v = self.prog.evaluate(&phases);
        if self.incumbent.as_ref().is_none_or(|(_, best)| v < *best - 1e-15) {
            let (p, v) = self.local_search(phases, v);
            self.incumbent = Some((p, v));
            let gap = (v - bound_hint).max(0.0);
            self.log.push(fmt_log(self.nodes, bound_hint, Some(v), gap));
        }
    }

    fn local_search(&self, mut phases: Vec<Phase>, mut value: f64) -> (Vec<Phase>, f64) {
        loop {
            let mut best: Option<(usize, Phase, f64)> = None;
            for s in 0..phases.len() {
                let keep = phases[s];
                for ph in Phase::ALL {
                    if ph == keep {
                        continue;
                    }
                    phases[s] = ph;
                    if self.feasible_point(&phases) {
                        let v = self.prog.evaluate(&phases);
                        if v < value - 1e-12 && best.is_none_or(|b| v < b.2) {
                            best = Some((s, ph, v));
                        }
                    }
                    phases[s] = keep;
                }
            }
            match best {
                Some((s, ph, v)) => {
                    phases[s] = ph;
                    value = v;
                }
                None => return (phases, value),
            }
        }
    }

    fn complete(&self, fixed: &[Option<Phase>]) -> Vec<Phase> {
        fixed.iter().zip(&self.prog.original).map(|(f, &o)| f.unwrap_or(o)).collect()
    }

    /// Row-activity propagation: can every row still be met by some completion?
    fn rows_reachable(&self, fixed: &[Option<Phase>], remaining: usize) -> bool {
        let nb = self.prog.n_binaries();
        for row in self.prog.rows.iter().filter(|r| !matches!(r.kind, RowKind::OneHot | RowKind::Epigraph)) {
            let (lo, hi) = activity_bounds(row, fixed, nb);
            let ok = match row.sense {
                Sense::Le => lo <= row.rhs + ROW_TOL * (1.0 + row.rhs.abs()),
                Sense::Ge => hi >= row.rhs - ROW_TOL * (1.0 + row.rhs.abs()),
                Sense::Eq => lo <= row.rhs + ROW_TOL && hi >= row.rhs - ROW_TOL,
            };
            if !ok {
                return false;
            }
        }
        let _ = remaining;
        true
    }

    fn relax(&self, node: &Node, remaining: usize) -> Relaxed {
        if self.quadratic {
            self.relax_qp(&node.fixed, remaining, node.warm.as_deref())
        } else {
            self.relax_lp(&node.fixed, &node.cuts)
        }
    }

    fn relax_qp(&self, fixed: &[Option<Phase>], remaining: usize, warm: Option<&[[f64; 3]]>) -> Relaxed {
        let prog = self.prog;
        let q = prog.objective.quadratic.as_ref().unwrap();
        let free: Vec<usize> = (0..fixed.len()).filter(|&s| fixed[s].is_none()).collect();
        let on: Vec<usize> = fixed.iter().enumerate().filter_map(|(s, f)| f.map(|p| 3 * s + p.index())).collect();
        let cols: Vec<usize> = free.iter().flat_map(|&s| (0..3).map(move |p| 3 * s + p)).collect();
        let mut constant = prog.objective.constant;
        for &i in &on {
            constant += prog.objective.linear[i];
            for &j in &on {
                constant += q[(i, j)];
            }
        }
        let qf = DMatrix::from_fn(cols.len(), cols.len(), |a, b| q[(cols[a], cols[b])]);
        let cf = DVector::from_fn(cols.len(), |a, _| {
            prog.objective.linear[cols[a]] + 2.0 * on.iter().map(|&j| q[(cols[a], j)]).sum::<f64>()
        });
        let home: Vec<usize> = free.iter().map(|&s| prog.original[s].index()).collect();
        let start: Option<Vec<[f64; 3]>> = warm.map(|w| free.iter().map(|&s| w[s]).collect());
        let r = QpProblem { q: &qf, c: &cf, constant, home: &home, budget: remaining }.solve_from(
            start.as_deref(),
            self.opts.qp_max_iter,
            1e-9,
            self.cutoff(),
        );
        Relaxed { bound: r.lower_bound, x: Some(r.x), integral: false, cuts: Vec::new() }
    }

    fn relax_lp(&self, fixed: &[Option<Phase>], inherited: &[usize]) -> Relaxed {
        let fail = |bound: f64| Relaxed { bound, x: None, integral: false, cuts: inherited.to_vec() };
        let prog = self.prog;
        let nb = prog.n_binaries();
        let free: Vec<usize> = (0..fixed.len()).filter(|&s| fixed[s].is_none()).collect();
        let mut pos = vec![usize::MAX; fixed.len()];
        for (k, &s) in free.iter().enumerate() {
            pos[s] = k;
        }
        let ncols = 3 * free.len() + prog.n_aux;
        let col = |j: usize| -> Option<usize> {
            if j >= nb {
                Some(3 * free.len() + j - nb)
            } else if pos[j / 3] != usize::MAX {
                Some(3 * pos[j / 3] + j % 3)
            } else {
                None
            }
        };
        let fixed_value = |j: usize| -> f64 {
            match fixed[j / 3] {
                Some(p) if p.index() == j % 3 => 1.0,
                _ => 0.0,
            }
        };
        let substitute = |row: &Row| -> LpRow {
            let mut coeffs = vec![0.0; ncols];
            let mut rhs = row.rhs;
            for &(j, a) in &row.coeffs {
                match col(j) {
                    Some(c) => coeffs[c] += a,
                    None => rhs -= a * fixed_value(j),
                }
            }
            LpRow { coeffs, sense: row.sense, rhs }
        };
        let mut c = vec![0.0; ncols];
        let mut constant = prog.objective.constant;
        for (j, &a) in prog.objective.linear.iter().enumerate() {
            match col(j) {
                Some(k) => c[k] += a,
                None => constant += a * fixed_value(j),
            }
        }
        let mut base_rows: Vec<LpRow> = Vec::new();
        for (k, _) in free.iter().enumerate() {
            let mut coeffs = vec![0.0; ncols];
            coeffs[3 * k..3 * k + 3].fill(1.0);
            base_rows.push(LpRow { coeffs, sense: Sense::Eq, rhs: 1.0 });
        }
        for row in prog.rows.iter().filter(|r| matches!(r.kind, RowKind::Budget | RowKind::PhaseCount)) {
            let r = substitute(row);
            if r.coeffs.iter().any(|&v| v != 0.0) {
                base_rows.push(r);
            }
        }

        let mut pool: Vec<usize> = inherited.to_vec();
        let mut member = vec![false; prog.rows.len()];
        for &i in &pool {
            member[i] = true;
        }
        for _round in 0..500 {
            let mut rows = base_rows.clone();
            rows.extend(pool.iter().map(|&i| substitute(&prog.rows[i])));
            let sol = solve_lp(&c, &rows);
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => return fail(f64::INFINITY),
                _ => return fail(f64::NEG_INFINITY),
            }
            // Most violated lazy row per auxiliary, and the worst few others.
            let value_of = |j: usize| col(j).map_or_else(|| fixed_value(j), |k| sol.x[k]);
            let mut per_aux: Vec<Option<(usize, f64)>> = vec![None; prog.n_aux];
            let mut others: Vec<(usize, f64)> = Vec::new();
            for (i, row) in prog.rows.iter().enumerate() {
                if member[i] || !row.kind.is_lazy() {
                    continue;
                }
                let act: f64 = row.coeffs.iter().map(|&(j, a)| a * value_of(j)).sum();
                let v = row.sense.violation(act, row.rhs);
                if v <= ROW_TOL * (1.0 + row.rhs.abs()) {
                    continue;
                }
                if row.kind == RowKind::Epigraph {
                    let t = row.coeffs.iter().find(|(j, _)| *j >= nb).unwrap().0 - nb;
                    if per_aux[t].is_none_or(|(_, w)| v > w) {
                        per_aux[t] = Some((i, v));
                    }
                } else {
                    others.push((i, v));
                }
            }
            others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let added: Vec<usize> =
                per_aux.iter().flatten().map(|&(i, _)| i).chain(others.iter().take(16).map(|&(i, _)| i)).collect();
            if added.is_empty() {
                let x: Vec<[f64; 3]> =
                    (0..free.len()).map(|k| [sol.x[3 * k], sol.x[3 * k + 1], sol.x[3 * k + 2]]).collect();
                let integral = x.iter().all(|v| v.iter().all(|&w| !(1e-7..=1.0 - 1e-7).contains(&w)));
                let cuts = pool
                    .iter()
                    .copied()
                    .filter(|&i| {
                        let r = &prog.rows[i];
                        let act: f64 = r.coeffs.iter().map(|&(j, a)| a * value_of(j)).sum();
                        (act - r.rhs).abs() <= 1e-7 * (1.0 + r.rhs.abs())
                    })
                    .collect();
                return Relaxed { bound: sol.objective + constant, x: Some(x), integral, cuts };
            }
            for i in added {
                member[i] = true;
                pool.push(i);
            }
        }
        fail(f64::NEG_INFINITY)
    }

    fn round(&self, fixed: &[Option<Phase>], x: &[[f64; 3]], remaining: usize) -> Vec<Phase> {
        let mut phases = self.complete(fixed);
        let free: Vec<usize> = (0..fixed.len()).filter(|&s| fixed[s].is_none()).collect();
        let mut switched: Vec<(f64, usize)> = Vec::new();
        for (k, &s) in free.iter().enumerate() {
            let v = x[k];
            let best = (0..3).fold(0, |b, j| if v[j] > v[b] { j } else { b });
            phases[s] = Phase::from_index(best);
            let home = self.prog.original[s].index();
            if best != home {
                switched.push((v[best] - v[home], s));
            }
        }
        switched.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let excess = switched.len().saturating_sub(remaining);
        for &(_, s) in switched.iter().take(excess) {
            phases[s] = self.prog.original[s];
        }
        phases
    }
}

fn activity_bounds(row: &Row, fixed: &[Option<Phase>], nb: usize) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    let mut per_slot: std::collections::BTreeMap<usize, [f64; 3]> = Default::default();
    for &(j, a) in &row.coeffs {
        if j >= nb {
            continue;
        }
        per_slot.entry(j / 3).or_insert([0.0; 3])[j % 3] += a;
    }
    for (s, c) in per_slot {
        match fixed[s] {
            Some(p) => {
                lo += c[p.index()];
                hi += c[p.index()];
            }
            None => {
                lo += c[0].min(c[1]).min(c[2]);
                hi += c[0].max(c[1]).max(c[2]);
            }
        }
    }
    (lo, hi)
}

/// Exact feasibility of `rows` (plus one-hot structure and the budget) by depth-first
/// search with activity-bound pruning; `None` when `cap` nodes were not enough.
fn rows_feasible(prog: &BinaryProgram, rows: &[usize], cap: usize) -> Option<bool> {
    let nb = prog.n_binaries();
    let n = prog.n_slots();
    let mut fixed: Vec<Option<Phase>> = vec![None; n];
    let mut visited = 0usize;
    fn ok(prog: &BinaryProgram, rows: &[usize], fixed: &[Option<Phase>], nb: usize) -> bool {
        rows.iter().all(|&i| {
            let r = &prog.rows[i];
            let (lo, hi) = activity_bounds(r, fixed, nb);
            let tol = ROW_TOL * (1.0 + r.rhs.abs());
            match r.sense {
                Sense::Le => lo <= r.rhs + tol,
                Sense::Ge => hi >= r.rhs - tol,
                Sense::Eq => lo <= r.rhs + tol && hi >= r.rhs - tol,
            }
        })
    }
    fn dfs(
        prog: &BinaryProgram,
        rows: &[usize],
        fixed: &mut Vec<Option<Phase>>,
        s: usize,
        visited: &mut usize,
        cap: usize,
        nb: usize,
    ) -> Option<bool> {
        *visited += 1;
        if *visited > cap {
            return None;
        }
        if !ok(prog, rows, fixed, nb) {
            return Some(false);
        }
        if s == fixed.len() {
            return Some(true);
        }
        let mut unknown = false;
        for p in Phase::ALL {
            fixed[s] = Some(p);
            match dfs(prog, rows, fixed, s + 1, visited, cap, nb) {
                Some(true) => {
                    fixed[s] = None;
                    return Some(true);
                }
                None => unknown = true,
                Some(false) => {}
            }
        }
        fixed[s] = None;
        if unknown {
            None
        } else {
            Some(false)
        }
    }
    dfs(prog, rows, &mut fixed, 0, &mut visited, cap, nb)
}

/// Deletion filter: an irreducible subset of constraint rows that is still infeasible.
pub fn irreducible_rows(prog: &BinaryProgram) -> Vec<String> {
    const CAP: usize = 200_000;
    let mut set: Vec<usize> =
        (0..prog.rows.len()).filter(|&i| !matches!(prog.rows[i].kind, RowKind::OneHot | RowKind::Epigraph)).collect();
    for i in set.clone() {
        let trial: Vec<usize> = set.iter().copied().filter(|&k| k != i).collect();
        if rows_feasible(prog, &trial, CAP) == Some(false) {
            set = trial;
        }
    }
    set.iter().map(|&i| prog.rows[i].name.clone()).collect()
}

/// Solves the program to the requested gap, or to the node/time limit.
pub fn branch_and_bound(prog: &BinaryProgram, opts: &BnbOptions) -> Result<BnbResult> {
    if opts.abs_gap < 0.0 || opts.rel_gap < 0.0 {
        return Err(Error::Validation("gap tolerances must be nonnegative".into()));
    }
    let quadratic = prog.objective.quadratic.is_some();
    match (opts.relaxation, quadratic) {
        (Relaxation::Simplex, true) => {
            return Err(Error::Unsupported("simplex relaxation needs a linear objective".into()))
        }
        (Relaxation::ProjectedGradient, false) => {
            return Err(Error::Unsupported(
                "projected-gradient relaxation needs a quadratic objective without epigraph rows".into(),
            ))
        }
        _ => {}
    }
    let start = Instant::now();
    let n = prog.n_slots();
    let mut search = Search { prog, opts, quadratic, incumbent: None, log: Vec::new(), nodes: 0 };

    let c0 = prog.original.clone();
    if search.feasible_point(&c0) {
        search.offer(c0, f64::NEG_INFINITY);
    }
    if let Some(w) = &opts.warm_start {
        if w.len() == n && search.feasible_point(w) {
            search.offer(w.clone(), f64::NEG_INFINITY);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    heap.push(Node { fixed: vec![None; n], bound: f64::NEG_INFINITY, seq, warm: None, cuts: Vec::new() });
    let mut pruned_lb = f64::INFINITY;
    let mut status = BnbStatus::Optimal;

    while let Some(node) = heap.pop() {
        if search.nodes >= opts.node_limit {
            status = BnbStatus::NodeLimit;
            heap.push(node);
            break;
        }
        if opts.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() > t) {
            status = BnbStatus::TimeLimit;
            heap.push(node);
            break;
        }
        if node.bound >= search.cutoff() {
            pruned_lb = pruned_lb.min(node.bound);
            continue;
        }
        search.nodes += 1;
        let fixed = node.fixed.clone();
        let used = fixed.iter().zip(&prog.original).filter(|(f, o)| f.is_some_and(|p| p != **o)).count();
        let remaining = prog.delta_max.saturating_sub(used);
        let free = fixed.iter().filter(|f| f.is_none()).count();

        if free == 0 || remaining == 0 {
            let point = search.complete(&fixed);
            if search.feasible_point(&point) {
                search.offer(point, node.bound);
            }
            continue;
        }
        if !search.rows_reachable(&fixed, remaining) {
            continue;
        }
        let relaxed = search.relax(&node, remaining);
        let bound = relaxed.bound.max(node.bound);
        if bound == f64::INFINITY {
            continue;
        }
        if search.nodes == 1 {
            let inc = search.incumbent.as_ref().map(|i| i.1);
            search.log.push(fmt_log(1, bound, inc, inc.map_or(f64::INFINITY, |v| (v - bound).max(0.0))));
        }
        if bound >= search.cutoff() {
            pruned_lb = pruned_lb.min(bound);
            continue;
        }
        let x = relaxed.x.clone();
        if let Some(x) = &x {
            let point = search.round(&fixed, x, remaining);
            if search.feasible_point(&point) {
                search.offer(point, bound);
                if relaxed.integral {
                    // The relaxation optimum is itself an integer point of this subtree.
                    continue;
                }
            }
        }
        if bound >= search.cutoff() {
            pruned_lb = pruned_lb.min(bound);
            continue;
        }
        let free_slots: Vec<usize> = (0..n).filter(|&s| fixed[s].is_none()).collect();
        let slot = match (&x, opts.branching) {
            (Some(x), Branching::MostFractional) => {
                let mut best = (free_slots[0], -1.0);
                for (k, &s) in free_slots.iter().enumerate() {
                    let frac = 1.0 - x[k].iter().copied().fold(0.0, f64::max);
                    if frac > best.1 + 1e-12 {
                        best = (s, frac);
                    }
                }
                best.0
            }
            _ => free_slots[0],
        };
        let warm = x.as_ref().map(|x| {
            let mut w = vec![[0.0; 3]; n];
            for (k, &s) in free_slots.iter().enumerate() {
                w[s] = x[k];
            }
            w
        });
        for p in Phase::ALL {
            let mut child = fixed.clone();
            child[slot] = Some(p);
            seq += 1;
            heap.push(Node { fixed: child, bound, seq, warm: warm.clone(), cuts: relaxed.cuts.clone() });
        }
        if search.nodes.is_multiple_of(1000) {
            let lb = heap.peek().map_or(bound, |n| n.bound).min(pruned_lb);
            let inc = search.incumbent.as_ref().map(|i| i.1);
            let gap = inc.map_or(f64::INFINITY, |v| (v - lb).max(0.0));
            search.log.push(fmt_log(search.nodes, lb, inc, gap));
            debug!("{}", search.log.last().unwrap());
        }
    }

    let Some((best, value)) = search.incumbent.clone() else {
        if status == BnbStatus::Optimal {
            return Err(Error::Infeasible { rows: irreducible_rows(prog) });
        }
        return Err(Error::Infeasible { rows: vec![format!("no feasible point found within the {status:?} limit")] });
    };
    let open_lb = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let bound = open_lb.min(pruned_lb).min(value);
    let gap = (value - bound).max(0.0);
    search.log.push(fmt_log(search.nodes, bound, Some(value), gap));
    Ok(BnbResult {
        assignment: PhaseAssignment::new(best),
        objective: value,
        bound,
        gap,
        nodes: search.nodes,
        status,
        log: search.log,
    })
}
