use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use phasebal::harness::fixtures::{self, synthetic_profiles};
use phasebal::harness::report::to_json;
use phasebal::harness::{
    cmd_export_lp, cmd_optimize, cmd_pf, cmd_scaling, cmd_sweep, cmd_validate, write_fixtures, Method, RunConfig,
    ScaleOptions,
};
use phasebal::netmodel::load_profiles;
use phasebal::oracle::write_ranked_csv;
use phasebal::{Error, Metric, PhaseAssignment, Result, Space};

#[derive(Parser)]
#[command(name = "phasebal", version, about = "Phase reconfiguration planning for three-wire LV feeders")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML file with any of the flags below; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Feeder description (JSON).
    #[arg(long, global = true)]
    feeder: Option<PathBuf>,
    /// Load profile CSV (`t,<user>:p,<user>:q,...`).
    #[arg(long, global = true)]
    profiles: Option<PathBuf>,
    /// Bundled fixture (a, b or c) instead of --feeder/--profiles.
    #[arg(long, global = true)]
    fixture: Option<String>,
    /// PVUR, PVUR*, I_U, P_U or P_U*.
    #[arg(long, global = true, value_parser = parse_metric)]
    objective: Option<Metric>,
    /// ga, miqp or oracle.
    #[arg(long, global = true, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; reports go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Switching budget (defaults to the number of reconfigurable users).
    #[arg(long, global = true)]
    delta_max: Option<usize>,
    /// exact-pf or ld3f: evaluation space of GA and oracle.
    #[arg(long, global = true, value_parser = parse_space)]
    space: Option<Space>,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the phase assignment and report all metrics on exact power flow.
    Optimize,
    /// Compare an assignment with the as-found configuration on other load data.
    Validate {
        /// Digits such as `1231`, a JSON array, or a run report (JSON file).
        #[arg(long)]
        assignment: String,
        /// Validation profiles; defaults to the configured profiles.
        #[arg(long)]
        validation_profiles: Option<PathBuf>,
        /// Use this many days of seeded synthetic profiles instead.
        #[arg(long)]
        synthetic_days: Option<usize>,
        #[arg(long, default_value_t = 1)]
        synthetic_seed: u64,
    },
    /// Optimize once per switching budget.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,5,10,20")]
        grid: Vec<usize>,
    },
    /// Time the methods over horizons (and over fixtures when `--fixtures` is given).
    Scale {
        #[arg(long, value_delimiter = ',', default_value = "1,24,96")]
        horizons: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "ga,miqp")]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Seconds per cell.
        #[arg(long)]
        timeout: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        fixtures: Vec<String>,
    },
    /// Write the binary program in LP format.
    ExportLp {
        #[arg(long)]
        lp: Option<PathBuf>,
    },
    /// Exact power flow of one timestep.
    Pf {
        #[arg(long, default_value_t = 0)]
        t: usize,
        /// As for `validate`; defaults to the as-found configuration.
        #[arg(long)]
        assignment: Option<String>,
    },
    /// Write the bundled fixtures as feeder JSON and profile CSV files.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_space(s: &str) -> std::result::Result<Space, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl GlobalArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let flags = RunConfig {
            fixture: self.fixture.clone(),
            feeder: self.feeder.clone(),
            profiles: self.profiles.clone(),
            objective: self.objective,
            method: self.method,
            seed: self.seed,
            threads: self.threads,
            out: self.out.clone(),
            delta_max: self.delta_max,
            space: self.space,
            ..RunConfig::default()
        };
        Ok(file.overridden_by(flags))
    }
}

fn parse_assignment(s: &str) -> Result<PhaseAssignment> {
    let text =
        if Path::new(s).is_file() { std::fs::read_to_string(s).map_err(|e| Error::io(s, e))? } else { s.to_string() };
    let text = text.trim();
    if text.starts_with('{') || text.starts_with('[') {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::Parse(format!("assignment: {e}")))?;
        let arr = v.get("assignment").cloned().unwrap_or(v);
        return serde_json::from_value(arr).map_err(|e| Error::Parse(format!("assignment: {e}")));
    }
    let digits: Vec<u8> = text
        .chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| c.to_digit(10).map(|d| d as u8).ok_or_else(|| Error::Parse(format!("assignment: bad phase '{c}'"))))
        .collect::<Result<_>>()?;
    PhaseAssignment::from_numbers(&digits)
}

fn emit<T: Serialize>(out: Option<&Path>, name: &str, value: &T) -> Result<()> {
    let json = to_json(value)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let p = dir.join(name);
            std::fs::write(&p, json + "\n").map_err(|e| Error::io(&p, e))?;
            eprintln!("wrote {}", p.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

fn csv_file(out: Option<&Path>, name: &str, write: impl FnOnce(std::fs::File) -> Result<()>) -> Result<()> {
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join(name);
        let f = std::fs::File::create(&p).map_err(|e| Error::io(&p, e))?;
        write(f)?;
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = cli.global.run_config()?;
    let out = cfg.out.clone();
    let out = out.as_deref();
    match cli.command {
        Command::Optimize => {
            let problem = cfg.problem()?;
            let report = cmd_optimize(&problem, &cfg)?;
            if !report.ga_trace.is_empty() {
                csv_file(out, "ga_trace.csv", |f| phasebal::ga::write_trace_csv(&report.ga_trace, f))?;
            }
            if cfg.method() == Method::Oracle && out.is_some() {
                let r = phasebal::oracle::enumerate_optimal(&problem, cfg.space(), cfg.oracle_cap())?;
                csv_file(out, "oracle_ranking.csv", |f| write_ranked_csv(&r.ranked, f))?;
            }
            emit(out, "report.json", &report)
        }
        Command::Validate { assignment, validation_profiles, synthetic_days, synthetic_seed } => {
            let (feeder, loads) = cfg.inputs()?;
            let a = parse_assignment(&assignment)?;
            let vloads = match (validation_profiles, synthetic_days) {
                (Some(p), None) => load_profiles(p, &feeder)?,
                (None, Some(days)) => synthetic_profiles(feeder.users.len(), 24 * days, synthetic_seed),
                (None, None) => loads,
                (Some(_), Some(_)) => {
                    return Err(Error::Validation("give --validation-profiles or --synthetic-days, not both".into()))
                }
            };
            let report = cmd_validate(&feeder, &a, &vloads)?;
            csv_file(out, "validation.csv", |f| report.write_csv(f))?;
            emit(out, "validation.json", &report)
        }
        Command::Sweep { grid } => {
            let problem = cfg.problem()?;
            let report = cmd_sweep(&problem, &cfg, &grid)?;
            csv_file(out, "sweep.csv", |f| report.write_csv(f))?;
            if !report.monotone {
                log::warn!("sweep objective is not monotone in the switching budget");
            }
            emit(out, "sweep.json", &report)
        }
        Command::Scale { horizons, methods, repeats, timeout, fixtures: names } => {
            let feeders = if names.is_empty() {
                let (f, l) = cfg.inputs()?;
                vec![(cfg.fixture.clone().unwrap_or_else(|| "input".into()), f, l)]
            } else {
                names
                    .iter()
                    .map(|n| fixtures::by_name(n).map(|(f, l)| (n.clone(), f, l)))
                    .collect::<Result<Vec<_>>>()?
            };
            let mut base = cfg.clone();
            base.fixture = None;
            let opts = ScaleOptions { horizons, methods, repeats, timeout_s: timeout };
            let report = cmd_scaling(&feeders, &base, &opts)?;
            csv_file(out, "scaling.csv", |f| report.write_csv(f))?;
            emit(out, "scaling.json", &report)
        }
        Command::ExportLp { lp } => {
            let problem = cfg.problem()?;
            let path = match (lp, out) {
                (Some(p), _) => p,
                (None, Some(dir)) => {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                    dir.join("program.lp")
                }
                (None, None) => return Err(Error::Validation("export-lp needs --lp or --out".into())),
            };
            let prog = cmd_export_lp(&problem, &path)?;
            eprintln!("wrote {} ({} binaries, {} rows)", path.display(), prog.n_binaries(), prog.rows.len());
            Ok(())
        }
        Command::Pf { t, assignment } => {
            let problem = cfg.problem()?;
            let a = match assignment {
                Some(s) => parse_assignment(&s)?,
                None => problem.original(),
            };
            let report = cmd_pf(&problem, &a, t)?;
            if !report.converged {
                return Err(Error::Divergence(format!("step {t} did not converge")));
            }
            emit(out, "pf.json", &report)
        }
        Command::Fixtures { dir } => {
            for p in write_fixtures(&dir)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Divergence(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
