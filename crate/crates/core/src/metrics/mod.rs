//! Imbalance metrics at a single balance point, plus spatial and temporal aggregation.
//!
//! All rates are returned in percent.

mod pipeline;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pipeline::{
    aggregate, denominator, time_mean, MetricPipeline, MetricTable, ObjectiveSpec, FLOW_SKIP_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "PVUR")]
    Pvur,
    #[serde(rename = "PVUR*")]
    PvurStar,
    #[serde(rename = "I_U")]
    IU,
    #[serde(rename = "P_U")]
    PU,
    #[serde(rename = "P_U*")]
    PUStar,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::PvurStar, Metric::Pvur, Metric::PUStar, Metric::PU, Metric::IU];

    /// Voltage metrics are evaluated at buses, the others at branches.
    pub fn is_voltage(self) -> bool {
        matches!(self, Metric::Pvur | Metric::PvurStar)
    }

    pub fn is_proxy(self) -> bool {
        matches!(self, Metric::PvurStar | Metric::PUStar)
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Pvur => "PVUR",
            Metric::PvurStar => "PVUR*",
            Metric::IU => "I_U",
            Metric::PU => "P_U",
            Metric::PUStar => "P_U*",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    /// Accepts `PVUR*`, `pvur-star`, `pvur_star`, `P_U`, `pu`, ... case-insensitively.
    fn from_str(s: &str) -> Result<Metric> {
        let key: String =
            s.to_ascii_lowercase().replace("star", "*").chars().filter(|c| !matches!(c, '_' | '-' | ' ')).collect();
        match key.as_str() {
            "pvur" => Ok(Metric::Pvur),
            "pvur*" => Ok(Metric::PvurStar),
            "iu" => Ok(Metric::IU),
            "pu" => Ok(Metric::PU),
            "pu*" => Ok(Metric::PUStar),
            _ => Err(Error::Validation(format!("unknown objective '{s}' (expected PVUR, PVUR*, I_U, P_U or P_U*)"))),
        }
    }
}

fn mean3(x: &[f64; 3]) -> f64 {
    (x[0] + x[1] + x[2]) / 3.0
}

fn max_relative_deviation(x: &[f64; 3], what: &str) -> Result<f64> {
    let m = mean3(x);
    if m == 0.0 || !m.is_finite() {
        return Err(Error::Metric(format!("zero mean {what}")));
    }
    Ok(x.iter().map(|v| (1.0 - v / m).abs()).fold(0.0, f64::max) * 100.0)
}

/// Phase voltage unbalance rate from magnitudes.
pub fn pvur(u_mags: &[f64; 3]) -> Result<f64> {
    max_relative_deviation(u_mags, "voltage")
}

/// Squared-magnitude proxy with the unit-mean normalization dropped.
pub fn pvur_star(omega: &[f64; 3]) -> f64 {
    let m = mean3(omega);
    omega.iter().map(|w| (w - m).abs()).fold(0.0, f64::max) * 100.0
}

/// Current unbalance rate from per-phase current magnitudes.
pub fn i_u(i_mags: &[f64; 3]) -> Result<f64> {
    max_relative_deviation(i_mags, "current")
}

/// Power unbalance rate from signed per-phase active flows.
pub fn p_u(p_flows: &[f64; 3]) -> Result<f64> {
    max_relative_deviation(p_flows, "active flow")
}

/// Sum of squared cyclic differences over `denom²`.
pub fn p_u_star(p_flows: &[f64; 3], denom: f64) -> Result<f64> {
    if !(denom > 0.0) {
        return Err(Error::Metric(format!("nonpositive flow normalization {denom}")));
    }
    let s: f64 = (0..3).map(|k| (p_flows[k] - p_flows[(k + 1) % 3]).powi(2)).sum();
    Ok(s / (denom * denom) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn near(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn pvur_examples() {
        assert_eq!(pvur(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert!(near(pvur(&[0.95, 1.0, 1.05]).unwrap(), 5.0));
        assert!(near(pvur(&[0.9, 0.9, 1.2]).unwrap(), 20.0));
        assert!(pvur(&[0.0; 3]).is_err());
    }

    #[test]
    fn pvur_star_examples() {
        assert_eq!(pvur_star(&[1.0, 1.0, 1.0]), 0.0);
        assert!(near(pvur_star(&[1.02, 0.98, 1.0]), 2.0));
        assert!(near(pvur_star(&[0.9, 1.0, 1.1]), 10.0));
    }

    #[test]
    fn flow_rate_examples() {
        assert_eq!(i_u(&[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert!(near(p_u(&[1.0, 2.0, 3.0]).unwrap(), 50.0));
        assert!(near(p_u(&[0.0, 0.0, 3.0]).unwrap(), 200.0));
        assert!(p_u(&[1.0, -1.0, 0.0]).is_err());
    }

    #[test]
    fn p_u_star_examples() {
        assert_eq!(p_u_star(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(near(p_u_star(&[1.0, 2.0, 3.0], 2.0).unwrap(), 150.0));
        assert!(near(p_u_star(&[1.0, 2.0, 3.0], 1.0).unwrap(), 600.0));
        assert!(p_u_star(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn metric_names_parse() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert_eq!("pvur-star".parse::<Metric>().unwrap(), Metric::PvurStar);
        assert_eq!("p_u_star".parse::<Metric>().unwrap(), Metric::PUStar);
        assert!("vuf".parse::<Metric>().is_err());
    }

    fn permutations(x: [f64; 3]) -> [[f64; 3]; 6] {
        [
            [x[0], x[1], x[2]],
            [x[0], x[2], x[1]],
            [x[1], x[0], x[2]],
            [x[1], x[2], x[0]],
            [x[2], x[0], x[1]],
            [x[2], x[1], x[0]],
        ]
    }

    proptest! {
        #[test]
        fn metrics_are_nonnegative_and_permutation_invariant(
            a in 0.5f64..1.5, b in 0.5f64..1.5, c in 0.5f64..1.5, d in 0.1f64..3.0
        ) {
            let x = [a, b, c];
            let base = [pvur(&x).unwrap(), pvur_star(&x), i_u(&x).unwrap(), p_u(&x).unwrap(), p_u_star(&x, d).unwrap()];
            prop_assert!(base.iter().all(|&v| v >= 0.0));
            for y in permutations(x) {
                let v = [pvur(&y).unwrap(), pvur_star(&y), i_u(&y).unwrap(), p_u(&y).unwrap(), p_u_star(&y, d).unwrap()];
                for k in 0..5 {
                    prop_assert!((v[k] - base[k]).abs() <= 1e-9 * (1.0 + base[k]));
                }
            }
        }

        #[test]
        fn balanced_input_scores_zero(a in 0.1f64..10.0) {
            let x = [a, a, a];
            // The mean of three equal floats can be off by one ulp.
            prop_assert!(pvur(&x).unwrap() <= 1e-12);
            prop_assert!(pvur_star(&x) <= 1e-12 * a);
            prop_assert_eq!(p_u_star(&x, 1.0).unwrap(), 0.0);
        }

        #[test]
        fn proxy_is_twice_pvur_to_first_order(e1 in -1.0f64..1.0, e2 in -1.0f64..1.0, e3 in -1.0f64..1.0) {
            let eps = 1e-4;
            let u = [1.0 + eps * e1, 1.0 + eps * e2, 1.0 + eps * e3];
            let w = [u[0] * u[0], u[1] * u[1], u[2] * u[2]];
            let lhs = pvur_star(&w);
            let rhs = 2.0 * pvur(&u).unwrap();
            // O(eps²) in fraction, times 100 for percent.
            prop_assert!((lhs - rhs).abs() <= 100.0 * 10.0 * eps * eps);
        }
    }
}
