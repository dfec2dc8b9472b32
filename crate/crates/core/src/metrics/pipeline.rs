use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ld3f::Ld3fSolution;
use crate::metrics::{i_u, p_u, p_u_star, pvur, pvur_star, Metric};
use crate::netmodel::{Feeder, LoadSeries};
use crate::pf_exact::{losses_over, PfSolution};

/// Flow metrics skip a (branch, t) whose phase-mean flow is this close to zero, pu.
pub const FLOW_SKIP_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub metric: Metric,
    /// Bus indices for voltage metrics.
    pub balance_buses: Vec<usize>,
    /// Branch indices for flow metrics.
    pub balance_branches: Vec<usize>,
}

impl ObjectiveSpec {
    /// Defaults: user buses for voltage metrics, branches leaving the reference for flows.
    pub fn new(feeder: &Feeder, metric: Metric) -> ObjectiveSpec {
        ObjectiveSpec { metric, balance_buses: feeder.user_buses(), balance_branches: feeder.head_branches() }
    }

    pub fn with_metric(&self, metric: Metric) -> ObjectiveSpec {
        ObjectiveSpec { metric, ..self.clone() }
    }

    pub fn validate(&self, feeder: &Feeder) -> Result<()> {
        let (set, len, what) = if self.metric.is_voltage() {
            (&self.balance_buses, feeder.buses.len(), "bus")
        } else {
            (&self.balance_branches, feeder.branches.len(), "branch")
        };
        if set.is_empty() {
            return Err(Error::Validation(format!("empty balance {what} set for {}", self.metric)));
        }
        if let Some(bad) = set.iter().find(|&&i| i >= len) {
            return Err(Error::Validation(format!("balance {what} index {bad} out of range")));
        }
        Ok(())
    }
}

/// One third of the summed time-mean demand downstream of `branch`, in watts.
pub fn denominator(feeder: &Feeder, loads: &LoadSeries, branch: usize) -> Result<f64> {
    let users = feeder.downstream_users(branch)?;
    let d = users.iter().map(|&u| loads.mean_p(u)).sum::<f64>() / 3.0;
    if !(d > 0.0) {
        return Err(Error::Metric(format!("no downstream demand on branch {branch} to normalize P_U*")));
    }
    Ok(d)
}

/// Spatial reduction per timestep (max for voltage metrics, mean for flow metrics), then
/// the mean over time. `None` entries are skipped; a timestep with nothing left is
/// skipped too, and a horizon with nothing left aggregates to 0.
pub fn aggregate(metric: Metric, values: &[Vec<Option<f64>>]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Validation("no timesteps to aggregate".into()));
    }
    let per_t = values
        .iter()
        .map(|row| {
            if row.is_empty() {
                return Err(Error::Validation("no balance points to aggregate".into()));
            }
            Ok(reduce_locations(metric, row))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(time_mean(&per_t))
}

fn reduce_locations(metric: Metric, row: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = row.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    Some(if metric.is_voltage() {
        present.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    })
}

/// Mean over the present entries; 0 when every entry was skipped.
pub fn time_mean(per_t: &[Option<f64>]) -> f64 {
    let present: Vec<f64> = per_t.iter().flatten().copied().collect();
    if present.is_empty() {
        if !per_t.is_empty() {
            warn!("every timestep was skipped; objective set to 0");
        }
        return 0.0;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

/// Objective evaluation for one spec with its normalizations precomputed.
#[derive(Debug, Clone)]
pub struct MetricPipeline {
    pub spec: ObjectiveSpec,
    /// `⟨p⟩*` per balance branch, pu (only for P_U*).
    denoms: Vec<f64>,
}

fn flow_rate(metric: Metric, x: &[f64; 3], branch: usize, t: usize) -> Option<f64> {
    let mean = (x[0] + x[1] + x[2]) / 3.0;
    if mean.abs() <= FLOW_SKIP_THRESHOLD {
        warn!("branch {branch}, step {t}: phase-mean flow {mean:.3e} pu near zero, skipped");
        return None;
    }
    let r = if metric == Metric::IU { i_u(x) } else { p_u(x) };
    r.ok()
}

impl MetricPipeline {
    pub fn new(feeder: &Feeder, loads: &LoadSeries, spec: ObjectiveSpec) -> Result<MetricPipeline> {
        spec.validate(feeder)?;
        let denoms = if spec.metric == Metric::PUStar {
            spec.balance_branches
                .iter()
                .map(|&k| Ok(denominator(feeder, loads, k)? / feeder.base_power))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(MetricPipeline { spec, denoms })
    }

    pub fn metric(&self) -> Metric {
        self.spec.metric
    }

    /// `⟨p⟩*` of each balance branch, pu.
    pub fn denominators(&self) -> &[f64] {
        &self.denoms
    }

    /// Spatially reduced value per timestep from exact power-flow results.
    pub fn per_timestep_exact(&self, sols: &[PfSolution]) -> Result<Vec<Option<f64>>> {
        let m = self.spec.metric;
        sols.iter()
            .enumerate()
            .map(|(t, s)| {
                let row: Vec<Option<f64>> = match m {
                    Metric::Pvur => self
                        .spec
                        .balance_buses
                        .iter()
                        .map(|&b| pvur(&s.magnitudes(b)).map(Some))
                        .collect::<Result<_>>()?,
                    Metric::PvurStar => {
                        self.spec.balance_buses.iter().map(|&b| Some(pvur_star(&s.squared_magnitudes(b)))).collect()
                    }
                    Metric::IU => self
                        .spec
                        .balance_branches
                        .iter()
                        .map(|&k| {
                            let c = &s.currents[k];
                            flow_rate(m, &[c[0].norm(), c[1].norm(), c[2].norm()], k, t)
                        })
                        .collect(),
                    Metric::PU => self
                        .spec
                        .balance_branches
                        .iter()
                        .map(|&k| {
                            let f = &s.flow_from[k];
                            flow_rate(m, &[f[0].re, f[1].re, f[2].re], k, t)
                        })
                        .collect(),
                    Metric::PUStar => self
                        .spec
                        .balance_branches
                        .iter()
                        .zip(&self.denoms)
                        .map(|(&k, &d)| {
                            let f = &s.flow_from[k];
                            p_u_star(&[f[0].re, f[1].re, f[2].re], d).map(Some)
                        })
                        .collect::<Result<_>>()?,
                };
                Ok(reduce_locations(m, &row))
            })
            .collect()
    }

    /// Spatially reduced value per timestep from LD3F results (`PVUR` uses `√ω`).
    pub fn per_timestep_ld3f(&self, sols: &[Ld3fSolution]) -> Result<Vec<Option<f64>>> {
        let m = self.spec.metric;
        sols.iter()
            .enumerate()
            .map(|(t, s)| {
                let row: Vec<Option<f64>> = match m {
                    Metric::Pvur => self
                        .spec
                        .balance_buses
                        .iter()
                        .map(|&b| {
                            let w = s.omega[b];
                            pvur(&[w[0].max(0.0).sqrt(), w[1].max(0.0).sqrt(), w[2].max(0.0).sqrt()]).map(Some)
                        })
                        .collect::<Result<_>>()?,
                    Metric::PvurStar => self.spec.balance_buses.iter().map(|&b| Some(pvur_star(&s.omega[b]))).collect(),
                    Metric::IU => {
                        return Err(Error::Unsupported("I_U needs branch currents, which LD3F does not model".into()))
                    }
                    Metric::PU => self.spec.balance_branches.iter().map(|&k| flow_rate(m, &s.p[k], k, t)).collect(),
                    Metric::PUStar => self
                        .spec
                        .balance_branches
                        .iter()
                        .zip(&self.denoms)
                        .map(|(&k, &d)| p_u_star(&s.p[k], d).map(Some))
                        .collect::<Result<_>>()?,
                };
                Ok(reduce_locations(m, &row))
            })
            .collect()
    }

    pub fn exact(&self, sols: &[PfSolution]) -> Result<f64> {
        Ok(time_mean(&self.per_timestep_exact(sols)?))
    }

    pub fn ld3f(&self, sols: &[Ld3fSolution]) -> Result<f64> {
        Ok(time_mean(&self.per_timestep_ld3f(sols)?))
    }
}

/// All five metrics and the loss percentage on exact power-flow results.
/// A metric that cannot be computed (e.g. no downstream demand) is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    #[serde(rename = "PVUR*")]
    pub pvur_star: Option<f64>,
    #[serde(rename = "PVUR")]
    pub pvur: Option<f64>,
    #[serde(rename = "P_U*")]
    pub p_u_star: Option<f64>,
    #[serde(rename = "P_U")]
    pub p_u: Option<f64>,
    #[serde(rename = "I_U")]
    pub i_u: Option<f64>,
    pub loss_percent: Option<f64>,
}

impl MetricTable {
    pub fn from_exact(feeder: &Feeder, loads: &LoadSeries, spec: &ObjectiveSpec, sols: &[PfSolution]) -> MetricTable {
        let value =
            |m: Metric| MetricPipeline::new(feeder, loads, spec.with_metric(m)).and_then(|p| p.exact(sols)).ok();
        MetricTable {
            pvur_star: value(Metric::PvurStar),
            pvur: value(Metric::Pvur),
            p_u_star: value(Metric::PUStar),
            p_u: value(Metric::PU),
            i_u: value(Metric::IU),
            loss_percent: losses_over(sols, feeder).ok(),
        }
    }

    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::PvurStar => self.pvur_star,
            Metric::Pvur => self.pvur,
            Metric::PUStar => self.p_u_star,
            Metric::PU => self.p_u,
            Metric::IU => self.i_u,
        }
    }
}
