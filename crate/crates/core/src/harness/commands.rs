//! The experiment procedures behind each CLI verb.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::{run_ga, GenerationStats};
use crate::harness::config::{Method, RunConfig};
use crate::harness::fixtures;
use crate::harness::report::{
    DistributionSummary, MetricDistribution, RunReport, ScalingReport, ScalingRow, SweepPoint, SweepReport,
    ValidationReport, SCHEMA_VERSION,
};
use crate::ld3f::sensitivity;
use crate::metrics::{Metric, MetricPipeline, ObjectiveSpec};
use crate::miqp::{branch_and_bound, build_program, export_lp, BinaryProgram, BnbStatus};
use crate::netmodel::{switch_count, ConstraintConfig, Feeder, LoadSeries, PhaseAssignment};
use crate::oracle::enumerate_optimal;
use crate::pf_exact::{losses, solve_pf};
use crate::problem::{Problem, Space};

/// Runs `f` on a dedicated rayon pool of `threads` workers (global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Validation("thread count must be positive".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// What a method returns before exact re-scoring.
struct Outcome {
    assignment: PhaseAssignment,
    objective: f64,
    space: Space,
    status: String,
    fitness_calls: Option<usize>,
    pf_calls: Option<usize>,
    nodes: Option<usize>,
    gap: Option<f64>,
    log: Vec<String>,
    trace: Vec<GenerationStats>,
}

pub fn miqp_program(problem: &Problem) -> Result<BinaryProgram> {
    let sens = sensitivity(&problem.feeder, &problem.loads)?;
    build_program(problem, &sens)
}

fn run_method(problem: &Problem, cfg: &RunConfig, warm: Option<&PhaseAssignment>) -> Result<Outcome> {
    match cfg.method() {
        Method::Ga => {
            let g = cfg.ga_config();
            let r = run_ga(problem, &g)?;
            Ok(Outcome {
                assignment: r.best,
                objective: r.best_fitness,
                space: g.space,
                status: if r.feasible { "feasible".into() } else { "infeasible".into() },
                fitness_calls: Some(r.fitness_calls),
                pf_calls: Some(r.pf_calls),
                nodes: None,
                gap: None,
                log: Vec::new(),
                trace: r.trace,
            })
        }
        Method::Miqp => {
            let prog = miqp_program(problem)?;
            let mut opts = cfg.bnb_options();
            if let Some(w) = warm {
                opts.warm_start.get_or_insert_with(|| w.phases().to_vec());
            }
            let r = branch_and_bound(&prog, &opts)?;
            let status = match r.status {
                BnbStatus::Optimal => "optimal",
                BnbStatus::NodeLimit => "node-limit",
                BnbStatus::TimeLimit => "time-limit",
            };
            Ok(Outcome {
                assignment: r.assignment,
                objective: r.objective,
                space: Space::Ld3f,
                status: status.into(),
                fitness_calls: None,
                pf_calls: None,
                nodes: Some(r.nodes),
                gap: Some(r.gap),
                log: r.log,
                trace: Vec::new(),
            })
        }
        Method::Oracle => {
            let space = cfg.space();
            let r = enumerate_optimal(problem, space, cfg.oracle_cap())?;
            let n = r.ranked.len();
            Ok(Outcome {
                assignment: r.best,
                objective: r.objective,
                space,
                status: "optimal".into(),
                fitness_calls: Some(n),
                pf_calls: (space == Space::ExactPf).then_some(n),
                nodes: None,
                gap: Some(0.0),
                log: Vec::new(),
                trace: Vec::new(),
            })
        }
    }
}

/// Runs the configured method and re-scores its solution and the as-found configuration
/// on exact power flow with every metric.
pub fn cmd_optimize(problem: &Problem, cfg: &RunConfig) -> Result<RunReport> {
    with_threads(cfg.threads, || {
        let start = Instant::now();
        let out = run_method(problem, cfg, None)?;
        let wall_time_s = start.elapsed().as_secs_f64();
        let original = problem.original();
        Ok(RunReport {
            schema_version: SCHEMA_VERSION,
            method: cfg.method(),
            objective_metric: problem.pipeline().metric(),
            space: out.space,
            objective: out.objective,
            wall_time_s,
            threads: rayon::current_num_threads(),
            seed: (cfg.method() == Method::Ga).then(|| cfg.ga_config().seed),
            fitness_calls: out.fitness_calls,
            pf_calls: out.pf_calls,
            nodes: out.nodes,
            gap: out.gap,
            status: out.status,
            delta_max: problem.constraints.delta_max,
            switches: switch_count(&out.assignment, &original)?,
            users: problem.feeder.reconfigurable_users().iter().map(|&u| problem.feeder.users[u].id.clone()).collect(),
            original_metrics: problem.metric_table(&original)?,
            solution_metrics: problem.metric_table(&out.assignment)?,
            solver_log: out.log,
            ga_trace: out.trace,
            assignment: out.assignment,
        })
    })?
}

/// Per-timestep exact-PF metric distributions of the as-found configuration and `assignment`
/// over `loads` (typically a horizon not used for optimization).
pub fn cmd_validate(feeder: &Feeder, assignment: &PhaseAssignment, loads: &LoadSeries) -> Result<ValidationReport> {
    let problem = Problem::new(
        feeder.clone(),
        loads.clone(),
        ConstraintConfig::new(feeder, feeder.reconfigurable_users().len()),
        ObjectiveSpec::new(feeder, Metric::PU),
    )?;
    if assignment.len() != feeder.reconfigurable_users().len() {
        return Err(Error::LengthMismatch { expected: feeder.reconfigurable_users().len(), actual: assignment.len() });
    }
    let orig = problem.solve_exact(&problem.original())?;
    let sol = problem.solve_exact(assignment)?;
    let mut metrics = Vec::new();
    for m in Metric::ALL {
        let pipe = MetricPipeline::new(feeder, loads, problem.spec().with_metric(m))?;
        let series = |s| pipe.per_timestep_exact(s).unwrap_or_else(|_| vec![None; loads.horizon()]);
        let (o, s) = (series(&orig), series(&sol));
        let defined = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<f64>>();
        metrics.push(MetricDistribution {
            metric: m,
            original: DistributionSummary::from_values(&defined(&o)),
            solution: DistributionSummary::from_values(&defined(&s)),
            original_series: o,
            solution_series: s,
        });
    }
    Ok(ValidationReport {
        schema_version: SCHEMA_VERSION,
        horizon: loads.horizon(),
        assignment: assignment.clone(),
        metrics,
    })
}

/// One optimization per switching budget in `grid` (sorted ascending). A smaller budget's
/// solution stays feasible for every larger one, so it is carried forward when better.
pub fn cmd_sweep(problem: &Problem, cfg: &RunConfig, grid: &[usize]) -> Result<SweepReport> {
    let mut grid = grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let original = problem.original();
    let (points, space) = with_threads(cfg.threads, || {
        let mut points = Vec::new();
        let mut best: Option<(PhaseAssignment, f64)> = None;
        let mut space = cfg.space();
        for &d in &grid {
            let mut p = problem.clone();
            p.constraints.delta_max = d;
            let run = run_method(&p, cfg, best.as_ref().map(|b| &b.0));
            let point = match run {
                Ok(out) => {
                    space = out.space;
                    let (assignment, objective, carried) = match &best {
                        Some((a, v)) if *v < out.objective => (a.clone(), *v, true),
                        _ => (out.assignment, out.objective, false),
                    };
                    best = Some((assignment.clone(), objective));
                    SweepPoint {
                        delta_max: d,
                        objective: Some(objective),
                        switches: switch_count(&assignment, &original).ok(),
                        exact_metrics: p.metric_table(&assignment).ok(),
                        assignment: Some(assignment),
                        status: out.status,
                        carried_over: carried,
                        error: None,
                    }
                }
                Err(e) => SweepPoint {
                    delta_max: d,
                    objective: None,
                    switches: None,
                    assignment: None,
                    exact_metrics: None,
                    status: "error".into(),
                    carried_over: false,
                    error: Some(e.to_string()),
                },
            };
            log::info!("sweep delta_max={d}: {:?}", point.objective);
            points.push(point);
        }
        (points, space)
    })?;
    let values: Vec<f64> = points.iter().filter_map(|p| p.objective).collect();
    let monotone = values.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()));
    Ok(SweepReport {
        schema_version: SCHEMA_VERSION,
        method: cfg.method(),
        objective_metric: problem.pipeline().metric(),
        space,
        points,
        monotone,
    })
}

/// Profiles truncated or cyclically repeated to `horizon` steps.
pub fn resize_horizon(loads: &LoadSeries, horizon: usize) -> Result<LoadSeries> {
    let h0 = loads.horizon();
    if h0 == 0 || horizon == 0 {
        return Err(Error::Validation("horizons must be positive".into()));
    }
    let take = |rows: &[Vec<f64>]| rows.iter().map(|r| (0..horizon).map(|t| r[t % h0]).collect()).collect();
    LoadSeries::new(loads.resolution, take(&loads.p), take(&loads.q))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleOptions {
    pub horizons: Vec<usize>,
    pub methods: Vec<Method>,
    /// Repeats of stochastic methods (seed incremented per repeat); others run once.
    pub repeats: usize,
    /// Per-cell time budget in seconds; passed to branch-and-bound, checked after the fact otherwise.
    pub timeout_s: Option<f64>,
}

impl Default for ScaleOptions {
    fn default() -> Self {
        ScaleOptions { horizons: vec![1, 24, 96], methods: vec![Method::Ga, Method::Miqp], repeats: 5, timeout_s: None }
    }
}

/// Wall time of each method over each feeder and horizon.
pub fn cmd_scaling(
    feeders: &[(String, Feeder, LoadSeries)],
    cfg: &RunConfig,
    opts: &ScaleOptions,
) -> Result<ScalingReport> {
    let mut rows = Vec::new();
    with_threads(cfg.threads, || -> Result<()> {
        for (name, feeder, loads) in feeders {
            for &h in &opts.horizons {
                let loads_h = resize_horizon(loads, h)?;
                let problem = cfg.problem_for(feeder.clone(), loads_h);
                for &method in &opts.methods {
                    let repeats = if method == Method::Ga { opts.repeats.max(1) } else { 1 };
                    for repeat in 0..repeats {
                        let mut c = cfg.clone();
                        c.method = Some(method);
                        c.seed = Some(cfg.ga_config().seed + repeat as u64);
                        if method == Method::Miqp {
                            let mut b = c.bnb_options();
                            b.time_limit = opts.timeout_s.or(b.time_limit);
                            c.bnb = Some(b);
                        }
                        let start = Instant::now();
                        let result = problem
                            .as_ref()
                            .map_err(|e| Error::Validation(e.to_string()))
                            .and_then(|p| run_method(p, &c, None));
                        let wall = start.elapsed().as_secs_f64();
                        let (objective, mut status, error) = match result {
                            Ok(o) => (Some(o.objective), o.status, None),
                            Err(e) => (None, "error".to_string(), Some(e.to_string())),
                        };
                        if opts.timeout_s.is_some_and(|t| wall > t) {
                            status = "timeout".into();
                        }
                        rows.push(ScalingRow {
                            feeder: name.clone(),
                            users: feeder.reconfigurable_users().len(),
                            horizon: h,
                            method,
                            repeat,
                            wall_time_s: wall,
                            objective,
                            status,
                            error,
                        });
                    }
                }
            }
        }
        Ok(())
    })??;
    Ok(ScalingReport { schema_version: SCHEMA_VERSION, rows })
}

pub fn cmd_export_lp(problem: &Problem, path: &Path) -> Result<BinaryProgram> {
    let prog = miqp_program(problem)?;
    export_lp(&prog, path)?;
    Ok(prog)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltage {
    pub bus: String,
    pub magnitude_pu: [f64; 3],
    pub angle_deg: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub from: String,
    pub to: String,
    pub p_kw: [f64; 3],
    pub q_kvar: [f64; 3],
    pub current_a: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfReport {
    pub schema_version: u32,
    pub t: usize,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
    pub loss_percent: Option<f64>,
    pub buses: Vec<BusVoltage>,
    pub branches: Vec<BranchFlow>,
}

/// One-shot exact power flow of step `t`.
pub fn cmd_pf(problem: &Problem, assignment: &PhaseAssignment, t: usize) -> Result<PfReport> {
    let f = &problem.feeder;
    let sol = solve_pf(f, assignment, &problem.loads, t, &problem.pf_options)?;
    let kva = f.base_power / 1000.0;
    let buses = (0..f.buses.len())
        .map(|b| {
            let v = &sol.voltages[b];
            BusVoltage {
                bus: f.buses[b].clone(),
                magnitude_pu: sol.magnitudes(b),
                angle_deg: [v[0].arg().to_degrees(), v[1].arg().to_degrees(), v[2].arg().to_degrees()],
            }
        })
        .collect();
    let branches = f
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let s = &sol.flow_from[k];
            let i = &sol.currents[k];
            BranchFlow {
                from: f.buses[br.from].clone(),
                to: f.buses[br.to].clone(),
                p_kw: [s[0].re * kva, s[1].re * kva, s[2].re * kva],
                q_kvar: [s[0].im * kva, s[1].im * kva, s[2].im * kva],
                current_a: [i[0].norm() * f.i_base(), i[1].norm() * f.i_base(), i[2].norm() * f.i_base()],
            }
        })
        .collect();
    Ok(PfReport {
        schema_version: SCHEMA_VERSION,
        t,
        converged: sol.converged,
        iterations: sol.iterations,
        max_mismatch_pu: sol.max_mismatch,
        loss_percent: losses(&sol, f).ok(),
        buses,
        branches,
    })
}

/// Writes `fixture_<x>.json` and `fixture_<x>_profiles.csv` for every bundled fixture.
pub fn write_fixtures(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for name in fixtures::NAMES {
        let (feeder, loads) = fixtures::by_name(name)?;
        let fp = dir.join(format!("fixture_{name}.json"));
        std::fs::write(&fp, feeder.to_json()).map_err(|e| Error::io(&fp, e))?;
        let pp = dir.join(format!("fixture_{name}_profiles.csv"));
        std::fs::write(&pp, loads.to_csv(&feeder)).map_err(|e| Error::io(&pp, e))?;
        written.extend([fp, pp]);
    }
    Ok(written)
}
