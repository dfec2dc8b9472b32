//! LinDist3Flow: lossless linear unbalanced power flow in squared voltage magnitudes.
//!
//! Per branch `i -> j` (pointing away from the reference):
//! `ω_j = ω_i − A p_ij − B q_ij`, flows equal the downstream demand sums.

mod sensitivity;

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::netmodel::{demand_at, Feeder, LoadSeries, PhaseAssignment};

pub use sensitivity::{sensitivity, AffineSensitivity};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaMatrices {
    pub re: Matrix3<f64>,
    pub im: Matrix3<f64>,
}

/// Real and imaginary parts of `Γ` with `Γ_φψ ≈ u_φ / u_ψ` for balanced voltages.
pub fn gamma() -> GammaMatrices {
    let h = 0.5 * 3f64.sqrt();
    GammaMatrices {
        re: Matrix3::new(1.0, -0.5, -0.5, -0.5, 1.0, -0.5, -0.5, -0.5, 1.0),
        im: Matrix3::new(0.0, h, -h, -h, 0.0, h, h, -h, 0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbPair {
    pub a: Matrix3<f64>,
    pub b: Matrix3<f64>,
}

/// `A = 2(ReΓ∘R + ImΓ∘X)`, `B = 2(ReΓ∘X − ImΓ∘R)` with `∘` the elementwise product,
/// i.e. `A + jB = 2 Γ∘conj(Z)` rotated into the drop `2 Re(Σ_ψ Γ_φψ conj(Z_φψ) s_ψ)`.
pub fn ab_matrices(r: &Matrix3<f64>, x: &Matrix3<f64>) -> AbPair {
    let g = gamma();
    AbPair {
        a: 2.0 * (g.re.component_mul(r) + g.im.component_mul(x)),
        b: 2.0 * (g.re.component_mul(x) - g.im.component_mul(r)),
    }
}

/// Per-unit `A`, `B` of every branch.
pub fn branch_ab(feeder: &Feeder) -> Vec<AbPair> {
    (0..feeder.branches.len())
        .map(|k| {
            let (r, x) = feeder.impedance_pu(k);
            ab_matrices(&r, &x)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ld3fSolution {
    /// Squared voltage magnitudes per bus, pu.
    pub omega: Vec<[f64; 3]>,
    /// Active flow per branch and phase, pu, positive away from the reference.
    pub p: Vec<[f64; 3]>,
    pub q: Vec<[f64; 3]>,
}

/// Sweeps a per-bus demand snapshot (pu) through the feeder.
pub(crate) fn sweep(feeder: &Feeder, ab: &[AbPair], demand: &[[Complex64; 3]]) -> Ld3fSolution {
    let nb = feeder.buses.len();
    let ne = feeder.branches.len();
    let mut sub_p: Vec<[f64; 3]> = demand.iter().map(|d| [d[0].re, d[1].re, d[2].re]).collect();
    let mut sub_q: Vec<[f64; 3]> = demand.iter().map(|d| [d[0].im, d[1].im, d[2].im]).collect();
    let mut p = vec![[0.0; 3]; ne];
    let mut q = vec![[0.0; 3]; ne];
    for &k in feeder.sweep_order().iter().rev() {
        let (i, j) = (feeder.branches[k].from, feeder.branches[k].to);
        p[k] = sub_p[j];
        q[k] = sub_q[j];
        for ph in 0..3 {
            sub_p[i][ph] += sub_p[j][ph];
            sub_q[i][ph] += sub_q[j][ph];
        }
    }
    let mut omega = vec![[1.0; 3]; nb];
    for &k in feeder.sweep_order() {
        let (i, j) = (feeder.branches[k].from, feeder.branches[k].to);
        let AbPair { a, b } = &ab[k];
        for ph in 0..3 {
            let mut drop = 0.0;
            for ps in 0..3 {
                drop += a[(ph, ps)] * p[k][ps] + b[(ph, ps)] * q[k][ps];
            }
            omega[j][ph] = omega[i][ph] - drop;
        }
    }
    Ld3fSolution { omega, p, q }
}

pub fn evaluate_ld3f(
    feeder: &Feeder,
    assignment: &PhaseAssignment,
    loads: &LoadSeries,
    t: usize,
) -> Result<Ld3fSolution> {
    let phases = assignment.user_phases(feeder)?;
    loads.check_against(feeder)?;
    if t >= loads.horizon() {
        return Err(crate::error::Error::Validation(format!("timestep {t} outside horizon")));
    }
    let demand = demand_at(feeder, &phases, loads, t, feeder.base_power);
    Ok(sweep(feeder, &branch_ab(feeder), &demand))
}

pub fn evaluate_series(feeder: &Feeder, assignment: &PhaseAssignment, loads: &LoadSeries) -> Result<Vec<Ld3fSolution>> {
    let phases = assignment.user_phases(feeder)?;
    loads.check_against(feeder)?;
    let ab = branch_ab(feeder);
    Ok((0..loads.horizon())
        .map(|t| sweep(feeder, &ab, &demand_at(feeder, &phases, loads, t, feeder.base_power)))
        .collect())
}
