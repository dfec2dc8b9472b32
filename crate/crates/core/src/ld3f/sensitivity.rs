use nalgebra::Matrix3;
use num_complex::Complex64;

use crate::error::Result;
use crate::ld3f::{branch_ab, sweep, Ld3fSolution};
use crate::netmodel::{Feeder, LoadSeries, Phase};

/// Affine map from the phase choice of every reconfigurable user to `ω` and branch flows.
///
/// `ω[k][t] = omega0[k][t] + Σ_u d_omega(u, c_u, k, t)`; flows likewise. Stored compactly:
/// the effect of user `u` on bus `k` only depends on the shared part of their paths,
/// summarized by the accumulated `A`, `B` over that part.
#[derive(Debug, Clone)]
pub struct AffineSensitivity {
    horizon: usize,
    /// Indices into `Feeder::users`, one per reconfigurable slot.
    users: Vec<usize>,
    /// `[bus][t]`, all reconfigurable users detached.
    pub omega0: Vec<Vec<[f64; 3]>>,
    /// `[branch][t]`.
    pub p0: Vec<Vec<[f64; 3]>>,
    pub q0: Vec<Vec<[f64; 3]>>,
    /// Accumulated `A`/`B` over the common path of bus `k` and slot `u`: `[k][u]`.
    common_a: Vec<Vec<Matrix3<f64>>>,
    common_b: Vec<Vec<Matrix3<f64>>>,
    /// `[branch][slot]`.
    downstream: Vec<Vec<bool>>,
    /// Demand of each slot, pu: `[slot][t]`.
    p_hat: Vec<Vec<f64>>,
    q_hat: Vec<Vec<f64>>,
}

/// Builds the affine map for `loads` over the full horizon.
pub fn sensitivity(feeder: &Feeder, loads: &LoadSeries) -> Result<AffineSensitivity> {
    loads.check_against(feeder)?;
    let ab = branch_ab(feeder);
    let nb = feeder.buses.len();
    let horizon = loads.horizon();
    let users: Vec<usize> = feeder.reconfigurable_users().to_vec();
    let mut is_reconf = vec![false; feeder.users.len()];
    for &u in &users {
        is_reconf[u] = true;
    }

    let mut omega0 = vec![Vec::with_capacity(horizon); nb];
    let mut p0 = vec![Vec::with_capacity(horizon); feeder.branches.len()];
    let mut q0 = vec![Vec::with_capacity(horizon); feeder.branches.len()];
    for t in 0..horizon {
        let mut demand = vec![[Complex64::new(0.0, 0.0); 3]; nb];
        for (ui, u) in feeder.users.iter().enumerate() {
            if !is_reconf[ui] {
                demand[u.bus][u.original_phase.index()] +=
                    Complex64::new(loads.p[ui][t] / feeder.base_power, loads.q[ui][t] / feeder.base_power);
            }
        }
        let Ld3fSolution { omega, p, q } = sweep(feeder, &ab, &demand);
        for k in 0..nb {
            omega0[k].push(omega[k]);
        }
        for k in 0..feeder.branches.len() {
            p0[k].push(p[k]);
            q0[k].push(q[k]);
        }
    }

    // Accumulated A, B from the reference to every bus, and bus depths for the LCA.
    let mut cum_a = vec![Matrix3::zeros(); nb];
    let mut cum_b = vec![Matrix3::zeros(); nb];
    let mut depth = vec![0usize; nb];
    for &k in feeder.sweep_order() {
        let (i, j) = (feeder.branches[k].from, feeder.branches[k].to);
        cum_a[j] = cum_a[i] + ab[k].a;
        cum_b[j] = cum_b[i] + ab[k].b;
        depth[j] = depth[i] + 1;
    }
    let parent = |b: usize| feeder.branches[feeder.parent_branch(b).unwrap()].from;
    let lca = |mut x: usize, mut y: usize| {
        while depth[x] > depth[y] {
            x = parent(x);
        }
        while depth[y] > depth[x] {
            y = parent(y);
        }
        while x != y {
            x = parent(x);
            y = parent(y);
        }
        x
    };
    let mut common_a = vec![Vec::with_capacity(users.len()); nb];
    let mut common_b = vec![Vec::with_capacity(users.len()); nb];
    for k in 0..nb {
        for &u in &users {
            let m = lca(k, feeder.users[u].bus);
            common_a[k].push(cum_a[m]);
            common_b[k].push(cum_b[m]);
        }
    }
    let downstream =
        (0..feeder.branches.len()).map(|e| users.iter().map(|&u| feeder.is_downstream(e, u)).collect()).collect();
    let p_hat = users.iter().map(|&u| loads.p[u].iter().map(|v| v / feeder.base_power).collect()).collect();
    let q_hat = users.iter().map(|&u| loads.q[u].iter().map(|v| v / feeder.base_power).collect()).collect();
    Ok(AffineSensitivity { horizon, users, omega0, p0, q0, common_a, common_b, downstream, p_hat, q_hat })
}

impl AffineSensitivity {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_slots(&self) -> usize {
        self.users.len()
    }

    /// Feeder user index of slot `s`.
    pub fn user_of(&self, slot: usize) -> usize {
        self.users[slot]
    }

    pub fn p_hat(&self, slot: usize, t: usize) -> f64 {
        self.p_hat[slot][t]
    }

    pub fn is_downstream(&self, branch: usize, slot: usize) -> bool {
        self.downstream[branch][slot]
    }

    /// Change of `ω` at `bus` when slot `s` is connected to `phase`.
    pub fn d_omega(&self, slot: usize, phase: Phase, bus: usize, t: usize) -> [f64; 3] {
        let a = &self.common_a[bus][slot];
        let b = &self.common_b[bus][slot];
        let c = phase.index();
        let (p, q) = (self.p_hat[slot][t], self.q_hat[slot][t]);
        [-(a[(0, c)] * p + b[(0, c)] * q), -(a[(1, c)] * p + b[(1, c)] * q), -(a[(2, c)] * p + b[(2, c)] * q)]
    }

    /// Change of (p, q) on `branch` when slot `s` is connected to `phase`.
    pub fn d_flow(&self, slot: usize, phase: Phase, branch: usize, t: usize) -> ([f64; 3], [f64; 3]) {
        let mut p = [0.0; 3];
        let mut q = [0.0; 3];
        if self.downstream[branch][slot] {
            p[phase.index()] = self.p_hat[slot][t];
            q[phase.index()] = self.q_hat[slot][t];
        }
        (p, q)
    }

    /// `ω` at `bus` and `t` for slot phases `phases`.
    pub fn omega(&self, phases: &[Phase], bus: usize, t: usize) -> [f64; 3] {
        let mut w = self.omega0[bus][t];
        for (s, &ph) in phases.iter().enumerate() {
            let d = self.d_omega(s, ph, bus, t);
            for i in 0..3 {
                w[i] += d[i];
            }
        }
        w
    }

    /// (p, q) on `branch` at `t` for slot phases `phases`.
    pub fn flow(&self, phases: &[Phase], branch: usize, t: usize) -> ([f64; 3], [f64; 3]) {
        let mut p = self.p0[branch][t];
        let mut q = self.q0[branch][t];
        for (s, &ph) in phases.iter().enumerate() {
            if self.downstream[branch][s] {
                p[ph.index()] += self.p_hat[s][t];
                q[ph.index()] += self.q_hat[s][t];
            }
        }
        (p, q)
    }
}
