//! Serializable run, validation, sweep and scaling reports.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::GenerationStats;
use crate::harness::config::Method;
use crate::metrics::{Metric, MetricTable};
use crate::netmodel::PhaseAssignment;
use crate::problem::Space;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub method: Method,
    pub objective_metric: Metric,
    /// Space in which `objective` was computed by the method itself.
    pub space: Space,
    pub objective: f64,
    pub wall_time_s: f64,
    pub threads: usize,
    pub seed: Option<u64>,
    pub fitness_calls: Option<usize>,
    pub pf_calls: Option<usize>,
    pub nodes: Option<usize>,
    pub gap: Option<f64>,
    pub status: String,
    pub delta_max: usize,
    pub switches: usize,
    /// Reconfigurable user ids, aligned with `assignment`.
    pub users: Vec<String>,
    pub assignment: PhaseAssignment,
    /// Exact power-flow metrics of the as-found configuration.
    pub original_metrics: MetricTable,
    /// Exact power-flow metrics recomputed from `assignment`.
    pub solution_metrics: MetricTable,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub solver_log: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ga_trace: Vec<GenerationStats>,
}

impl RunReport {
    /// Copy with the wall-clock and thread-count fields cleared.
    pub fn without_timing(&self) -> RunReport {
        RunReport { wall_time_s: 0.0, threads: 0, ..self.clone() }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(format!("json: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(format!("csv: {e}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Five-number summary with Tukey outliers (beyond 1.5 IQR).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub outliers: Vec<f64>,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    // Linear interpolation between order statistics.
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl DistributionSummary {
    /// `None` when `values` is empty.
    pub fn from_values(values: &[f64]) -> Option<DistributionSummary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
        let fence = 1.5 * (q3 - q1);
        Some(DistributionSummary {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1,
            median: quantile(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            outliers: v.iter().copied().filter(|&x| x < q1 - fence || x > q3 + fence).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDistribution {
    pub metric: Metric,
    pub original: Option<DistributionSummary>,
    pub solution: Option<DistributionSummary>,
    /// Per-timestep values (`None` where the metric is undefined).
    pub original_series: Vec<Option<f64>>,
    pub solution_series: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub schema_version: u32,
    pub horizon: usize,
    pub assignment: PhaseAssignment,
    pub metrics: Vec<MetricDistribution>,
}

impl ValidationReport {
    pub fn get(&self, m: Metric) -> Option<&MetricDistribution> {
        self.metrics.iter().find(|d| d.metric == m)
    }

    /// Long format: `t,metric,original,solution`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "metric", "original", "solution"]).map_err(csv_err)?;
        for d in &self.metrics {
            for t in 0..self.horizon {
                w.write_record([
                    t.to_string(),
                    d.metric.to_string(),
                    opt(d.original_series[t]),
                    opt(d.solution_series[t]),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_max: usize,
    pub objective: Option<f64>,
    pub switches: Option<usize>,
    pub assignment: Option<PhaseAssignment>,
    pub exact_metrics: Option<MetricTable>,
    pub status: String,
    /// The solution of a smaller budget was better and was kept.
    pub carried_over: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema_version: u32,
    pub method: Method,
    pub objective_metric: Metric,
    pub space: Space,
    pub points: Vec<SweepPoint>,
    /// Objective non-increasing along the grid (over points that succeeded).
    pub monotone: bool,
}

impl SweepReport {
    /// `delta_max,objective,switches,status,carried_over,<exact metrics...>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            "delta_max".to_string(),
            "objective".into(),
            "switches".into(),
            "status".into(),
            "carried_over".into(),
        ];
        header.extend(Metric::ALL.iter().map(|m| format!("exact_{m}")));
        header.push("exact_loss_percent".into());
        w.write_record(&header).map_err(csv_err)?;
        for p in &self.points {
            let mut rec = vec![
                p.delta_max.to_string(),
                opt(p.objective),
                p.switches.map(|s| s.to_string()).unwrap_or_default(),
                p.status.clone(),
                p.carried_over.to_string(),
            ];
            for m in Metric::ALL {
                rec.push(opt(p.exact_metrics.as_ref().and_then(|t| t.get(m))));
            }
            rec.push(opt(p.exact_metrics.as_ref().and_then(|t| t.loss_percent)));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub feeder: String,
    pub users: usize,
    pub horizon: usize,
    pub method: Method,
    pub repeat: usize,
    pub wall_time_s: f64,
    pub objective: Option<f64>,
    pub status: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub schema_version: u32,
    /// One row per (feeder, horizon, method, repeat).
    pub rows: Vec<ScalingRow>,
}

impl ScalingReport {
    /// Slowest repeat of each (feeder, horizon, method) cell, in first-seen order.
    pub fn slowest(&self) -> Vec<&ScalingRow> {
        let mut out: Vec<&ScalingRow> = Vec::new();
        for r in &self.rows {
            match out.iter_mut().find(|o| o.feeder == r.feeder && o.horizon == r.horizon && o.method == r.method) {
                Some(o) if r.wall_time_s > o.wall_time_s => *o = r,
                Some(_) => {}
                None => out.push(r),
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "feeder",
            "users",
            "horizon",
            "method",
            "repeat",
            "wall_time_s",
            "objective",
            "status",
            "error",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.feeder.clone(),
                r.users.to_string(),
                r.horizon.to_string(),
                r.method.to_string(),
                r.repeat.to_string(),
                format!("{}", r.wall_time_s),
                opt(r.objective),
                r.status.clone(),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(format!("csv: {e}")))
    }
}
