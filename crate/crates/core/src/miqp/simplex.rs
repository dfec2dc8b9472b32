//! Dense two-phase tableau simplex for small LP relaxations, `x ≥ 0`.

use crate::miqp::program::Sense;

const EPS: f64 = 1e-10;
/// Degenerate pivots tolerated under Dantzig's rule before switching to Bland's.
const STALL_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

struct Tableau {
    m: usize,
    width: usize,
    a: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.a[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.a[r * w + e];
        for v in &mut self.a[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.a.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (x, y) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * y;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Minimizes the current objective row; columns `>= blocked` never enter.
    fn run(&mut self, blocked: usize, max_iter: usize) -> LpStatus {
        let w = self.width;
        let mut bland = false;
        let mut stall = 0;
        for _ in 0..max_iter {
            let entering = if bland {
                (0..blocked).find(|&j| self.obj[j] < -EPS)
            } else {
                let mut best = None;
                let mut best_v = -EPS;
                for j in 0..blocked {
                    if self.obj[j] < best_v {
                        best_v = self.obj[j];
                        best = Some(j);
                    }
                }
                best
            };
            let Some(e) = entering else { return LpStatus::Optimal };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.a[i * w + e];
                if a > EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, ratio)) = leave else { return LpStatus::Unbounded };
            if ratio.abs() <= EPS {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
            }
            self.pivot(r, e);
        }
        LpStatus::IterationLimit
    }
}

/// Minimizes `cᵀx` subject to `rows`, `x ≥ 0`.
pub fn solve_lp(c: &[f64], rows: &[LpRow]) -> LpSolution {
    let n = c.len();
    let m = rows.len();
    let mut rows: Vec<LpRow> = rows.to_vec();
    for r in &mut rows {
        debug_assert_eq!(r.coeffs.len(), n);
        if r.rhs < 0.0 {
            r.rhs = -r.rhs;
            for v in &mut r.coeffs {
                *v = -*v;
            }
            r.sense = match r.sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let n_slack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
    let n_art = rows.iter().filter(|r| r.sense != Sense::Le).count();
    let cols = n + n_slack + n_art;
    let width = cols + 1;
    let mut t = Tableau { m, width, a: vec![0.0; m * width], obj: vec![0.0; width], basis: vec![0; m] };
    let (mut s, mut a) = (n, n + n_slack);
    for (i, r) in rows.iter().enumerate() {
        let row = &mut t.a[i * width..(i + 1) * width];
        row[..n].copy_from_slice(&r.coeffs);
        row[cols] = r.rhs;
        match r.sense {
            Sense::Le => {
                row[s] = 1.0;
                t.basis[i] = s;
                s += 1;
            }
            Sense::Ge => {
                row[s] = -1.0;
                s += 1;
                row[a] = 1.0;
                t.basis[i] = a;
                a += 1;
            }
            Sense::Eq => {
                row[a] = 1.0;
                t.basis[i] = a;
                a += 1;
            }
        }
    }
    let max_iter = 50 * (m + cols).max(10);
    let art_start = n + n_slack;

    if n_art > 0 {
        for i in 0..m {
            if t.basis[i] >= art_start {
                for j in 0..width {
                    if j < art_start || j == cols {
                        t.obj[j] -= t.a[i * width + j];
                    }
                }
            }
        }
        match t.run(art_start, max_iter) {
            LpStatus::Optimal => {}
            status => return LpSolution { status, x: vec![0.0; n], objective: f64::NAN },
        }
        let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        if -t.obj[cols] > 1e-9 * scale {
            return LpSolution { status: LpStatus::Infeasible, x: vec![0.0; n], objective: f64::NAN };
        }
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| t.a[i * width + j].abs() > 1e-9) {
                    t.pivot(i, j);
                }
            }
        }
    }

    t.obj.iter_mut().for_each(|v| *v = 0.0);
    t.obj[..n].copy_from_slice(c);
    for i in 0..m {
        let cb = if t.basis[i] < n { c[t.basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                t.obj[j] -= cb * t.a[i * width + j];
            }
        }
    }
    let status = t.run(art_start, max_iter);
    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpSolution { status, x, objective }
}
