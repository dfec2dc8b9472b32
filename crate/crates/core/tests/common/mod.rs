//! Reference computations shared by the integration tests. Nothing here calls
//! into the solvers under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64 as C;

use phasebal::netmodel::injections;
use phasebal::pf_exact::{reference_voltages, PfSolution};
use phasebal::{Feeder, LoadSeries, PhaseAssignment};

/// Series impedance of a branch in per-unit, as a complex 3x3 matrix.
pub fn z_pu(feeder: &Feeder, k: usize) -> Matrix3<C> {
    let (r, x) = feeder.impedance_pu(k);
    Matrix3::from_fn(|i, j| C::new(r[(i, j)], x[(i, j)]))
}

/// Nodal admittance over index `3 * bus + phase`.
pub fn admittance(feeder: &Feeder) -> DMatrix<C> {
    let n = 3 * feeder.buses.len();
    let mut y = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    for (k, br) in feeder.branches.iter().enumerate() {
        let yk = z_pu(feeder, k).try_inverse().expect("invertible branch impedance");
        for a in 0..3 {
            for b in 0..3 {
                let (fa, fb, ta, tb) = (3 * br.from + a, 3 * br.from + b, 3 * br.to + a, 3 * br.to + b);
                y[(fa, fb)] += yk[(a, b)];
                y[(ta, tb)] += yk[(a, b)];
                y[(fa, tb)] -= yk[(a, b)];
                y[(ta, fb)] -= yk[(a, b)];
            }
        }
    }
    y
}

/// Per-bus demand in per-unit at step `t`.
pub fn demand_pu(feeder: &Feeder, a: &PhaseAssignment, loads: &LoadSeries, t: usize) -> Vec<[C; 3]> {
    injections(feeder, a, loads, t).unwrap().into_iter().map(|d| d.map(|s| s / feeder.base_power)).collect()
}

/// Newton-Raphson in rectangular coordinates on the nodal power balance
/// `V ∘ conj(Y V) + d = 0` over all non-reference nodes.
pub fn newton_raphson(feeder: &Feeder, demand: &[[C; 3]], tol: f64) -> Vec<[C; 3]> {
    let y = admittance(feeder);
    let nb = feeder.buses.len();
    let r = feeder.reference_bus;
    let vr = reference_voltages();
    let mut v: Vec<C> = (0..3 * nb).map(|i| vr[i % 3]).collect();
    let free: Vec<usize> = (0..3 * nb).filter(|i| i / 3 != r).collect();
    let m = free.len();
    for _ in 0..50 {
        let vv = DVector::from_column_slice(&v);
        let cur = &y * &vv;
        let mut f = DVector::zeros(2 * m);
        for (row, &i) in free.iter().enumerate() {
            let s = v[i] * cur[i].conj() + demand[i / 3][i % 3];
            f[row] = s.re;
            f[m + row] = s.im;
        }
        if f.amax() < tol * 1e-3 {
            break;
        }
        let mut jac = DMatrix::zeros(2 * m, 2 * m);
        for (row, &i) in free.iter().enumerate() {
            for (col, &k) in free.iter().enumerate() {
                let vy = v[i] * y[(i, k)].conj();
                let mut de = vy;
                let mut df = -C::i() * vy;
                if i == k {
                    de += cur[i].conj();
                    df += C::i() * cur[i].conj();
                }
                jac[(row, col)] = de.re;
                jac[(m + row, col)] = de.im;
                jac[(row, m + col)] = df.re;
                jac[(m + row, m + col)] = df.im;
            }
        }
        let dx = jac.lu().solve(&(-f)).expect("nonsingular Jacobian");
        for (col, &k) in free.iter().enumerate() {
            v[k] += C::new(dx[col], dx[m + col]);
        }
    }
    (0..nb).map(|b| [v[3 * b], v[3 * b + 1], v[3 * b + 2]]).collect()
}

/// Largest nodal power mismatch of a voltage solution, pu.
pub fn max_mismatch(feeder: &Feeder, voltages: &[[C; 3]], demand: &[[C; 3]]) -> f64 {
    let y = admittance(feeder);
    let v: Vec<C> = voltages.iter().flatten().copied().collect();
    let cur = &y * DVector::from_column_slice(&v);
    (0..v.len())
        .filter(|i| i / 3 != feeder.reference_bus)
        .map(|i| (v[i] * cur[i].conj() + demand[i / 3][i % 3]).norm())
        .fold(0.0, f64::max)
}

/// Loss percentage from `Re(I^H Z I)` summed over branches, with branch currents
/// recomputed from the bus voltages.
pub fn i2r_loss_percent(feeder: &Feeder, sol: &PfSolution) -> f64 {
    let mut loss = 0.0;
    let mut supply = 0.0;
    for (k, br) in feeder.branches.iter().enumerate() {
        let z = z_pu(feeder, k);
        let y = z.try_inverse().unwrap();
        let dv = nalgebra::Vector3::from_fn(|p, _| sol.voltages[br.from][p] - sol.voltages[br.to][p]);
        let i = y * dv;
        loss += (i.adjoint() * z * i)[(0, 0)].re;
        if br.from == feeder.reference_bus {
            supply += (0..3).map(|p| (sol.voltages[br.from][p] * i[p].conj()).re).sum::<f64>();
        }
    }
    100.0 * loss / supply
}
