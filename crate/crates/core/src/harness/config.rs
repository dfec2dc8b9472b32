//! Run configuration: a TOML file whose keys mirror the CLI flags; flags win.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ga::GaConfig;
use crate::harness::fixtures;
use crate::metrics::{Metric, ObjectiveSpec};
use crate::miqp::BnbOptions;
use crate::netmodel::{load_feeder, load_profiles, ConstraintConfig, Feeder, LoadSeries};
use crate::problem::{Problem, Space};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ga,
    Miqp,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ga, Method::Miqp, Method::Oracle];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ga => "ga",
            Method::Miqp => "miqp",
            Method::Oracle => "oracle",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Method> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(Method::Ga),
            "miqp" | "bnb" => Ok(Method::Miqp),
            "oracle" | "enumerate" => Ok(Method::Oracle),
            _ => Err(Error::Parse(format!("unknown method '{s}' (expected ga, miqp or oracle)"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled fixture name (`a`, `b`, `c`) used instead of `feeder` + `profiles`.
    pub fixture: Option<String>,
    pub feeder: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub objective: Option<Metric>,
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub delta_max: Option<usize>,
    /// Per-phase user share bounds `[low, high]`; enables the phase-count rows.
    pub phase_fractions: Option<[f64; 2]>,
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Evaluation space of GA fitness and oracle scores.
    pub space: Option<Space>,
    pub oracle_cap: Option<u64>,
    pub ga: Option<GaConfig>,
    pub bnb: Option<BnbOptions>,
}

macro_rules! overlay {
    ($base:ident, $over:ident; $($f:ident),*) => {
        $( if $over.$f.is_some() { $base.$f = $over.$f; } )*
    };
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    /// Fields set in `flags` replace those of `self`.
    pub fn overridden_by(mut self, flags: RunConfig) -> RunConfig {
        overlay!(self, flags; fixture, feeder, profiles, objective, method, seed, threads, out,
            delta_max, phase_fractions, v_min, v_max, space, oracle_cap, ga, bnb);
        self
    }

    pub fn metric(&self) -> Metric {
        self.objective.unwrap_or(Metric::PU)
    }

    pub fn method(&self) -> Method {
        self.method.unwrap_or(Method::Ga)
    }

    pub fn space(&self) -> Space {
        self.space.unwrap_or(Space::ExactPf)
    }

    pub fn ga_config(&self) -> GaConfig {
        let mut g = self.ga.clone().unwrap_or_default();
        if let Some(seed) = self.seed {
            g.seed = seed;
        }
        if let Some(space) = self.space {
            g.space = space;
        }
        g
    }

    pub fn bnb_options(&self) -> BnbOptions {
        self.bnb.clone().unwrap_or_default()
    }

    pub fn oracle_cap(&self) -> u128 {
        self.oracle_cap.map_or(crate::oracle::DEFAULT_CAP, u128::from)
    }

    /// Feeder and profiles from the fixture name or the two input paths.
    pub fn inputs(&self) -> Result<(Feeder, LoadSeries)> {
        match (&self.fixture, &self.feeder, &self.profiles) {
            (Some(name), None, None) => fixtures::by_name(name),
            (None, Some(f), Some(p)) => {
                let feeder = load_feeder(f)?;
                let loads = load_profiles(p, &feeder)?;
                Ok((feeder, loads))
            }
            (Some(_), _, _) => {
                Err(Error::Validation("give either a fixture or feeder/profiles paths, not both".into()))
            }
            _ => Err(Error::Validation("both --feeder and --profiles are required (or --fixture)".into())),
        }
    }

    pub fn constraints(&self, feeder: &Feeder) -> ConstraintConfig {
        let mut c = ConstraintConfig::new(feeder, self.delta_max.unwrap_or(feeder.reconfigurable_users().len()));
        if let Some([lo, hi]) = self.phase_fractions {
            c = c.with_phase_fractions(feeder, lo, hi);
        }
        if let Some(v) = self.v_min {
            c.v_min = v;
        }
        if let Some(v) = self.v_max {
            c.v_max = v;
        }
        c
    }

    pub fn problem(&self) -> Result<Problem> {
        let (feeder, loads) = self.inputs()?;
        self.problem_for(feeder, loads)
    }

    pub fn problem_for(&self, feeder: Feeder, loads: LoadSeries) -> Result<Problem> {
        let constraints = self.constraints(&feeder);
        let spec = ObjectiveSpec::new(&feeder, self.metric());
        Problem::new(feeder, loads, constraints, spec)
    }
}
