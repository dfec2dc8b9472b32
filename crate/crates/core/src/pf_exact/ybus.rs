use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::netmodel::{complex_impedance, Feeder};

/// Nodal admittance over (bus, phase), index `3 * bus + phase`, per-unit.
#[derive(Debug, Clone)]
pub struct YBus {
    pub matrix: DMatrix<Complex64>,
    /// Series admittance `Z⁻¹` of each branch.
    pub branch_admittance: Vec<Matrix3<Complex64>>,
}

/// Assembles `Y` from per-branch blocks `[[Y, -Y], [-Y, Y]]` with `Y = Z⁻¹`.
pub fn build_ybus(feeder: &Feeder) -> Result<YBus> {
    let n = 3 * feeder.buses.len();
    let mut matrix = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    let mut branch_admittance = Vec::with_capacity(feeder.branches.len());
    for (k, br) in feeder.branches.iter().enumerate() {
        let (r, x) = feeder.impedance_pu(k);
        let y = complex_impedance(&r, &x)
            .try_inverse()
            .ok_or_else(|| Error::Validation(format!("branch {k}: singular impedance")))?;
        let (i, j) = (3 * br.from, 3 * br.to);
        for a in 0..3 {
            for b in 0..3 {
                matrix[(i + a, i + b)] += y[(a, b)];
                matrix[(j + a, j + b)] += y[(a, b)];
                matrix[(i + a, j + b)] -= y[(a, b)];
                matrix[(j + a, i + b)] -= y[(a, b)];
            }
        }
        branch_admittance.push(y);
    }
    Ok(YBus { matrix, branch_admittance })
}
