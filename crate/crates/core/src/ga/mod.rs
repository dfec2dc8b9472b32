//! Genetic algorithm over integer phase lists with a penalty fitness.

mod operators;

use std::collections::HashMap;
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{Phase, PhaseAssignment};
use crate::problem::{Problem, Space};

pub use operators::{crossover_at, crossover_single_point, duel, mutate_random_reset, tournament_select};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_fitness_calls: usize,
    pub crossover_prob: f64,
    /// `None` means `1 / |U|`.
    pub mutation_prob: Option<f64>,
    pub penalty: f64,
    pub seed: u64,
    pub space: Space,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 100,
            max_fitness_calls: 6000,
            crossover_prob: 0.7,
            mutation_prob: None,
            penalty: 100.0,
            seed: 0,
            space: Space::ExactPf,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 || !self.population_size.is_multiple_of(2) {
            return Err(Error::Validation(format!(
                "population size must be even and >= 2, got {}",
                self.population_size
            )));
        }
        let probs = [Some(self.crossover_prob), self.mutation_prob];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Validation("GA probabilities must lie in [0, 1]".into()));
        }
        if !(self.penalty > 1.0) {
            return Err(Error::Validation(format!("penalty multiplier must exceed 1, got {}", self.penalty)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: f64,
    pub median: f64,
    pub worst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best: PhaseAssignment,
    pub best_fitness: f64,
    pub trace: Vec<GenerationStats>,
    /// Fitness requests including memo-cache hits.
    pub fitness_calls: usize,
    /// Power-flow series actually solved.
    pub pf_calls: usize,
    pub feasible: bool,
}

/// Penalty fitness: binary violations cost `M·I0` without a power flow; otherwise
/// `I(x)`, plus `M·I0` on any operational violation.
pub struct Fitness<'a> {
    problem: &'a Problem,
    space: Space,
    i0: f64,
    penalty_value: f64,
    pf_calls: AtomicUsize,
}

impl<'a> Fitness<'a> {
    pub fn new(problem: &'a Problem, space: Space, penalty: f64) -> Result<Fitness<'a>> {
        let e = problem.evaluate(&problem.original(), space)?;
        if !e.objective.is_finite() {
            return Err(Error::Divergence("objective of the original configuration is undefined".into()));
        }
        let i0 = e.objective;
        // A perfectly balanced start would make the penalty vanish.
        let base = if i0 > 0.0 { i0 } else { 1.0 };
        Ok(Fitness { problem, space, i0, penalty_value: penalty * base, pf_calls: AtomicUsize::new(1) })
    }

    pub fn i0(&self) -> f64 {
        self.i0
    }

    pub fn penalty_value(&self) -> f64 {
        self.penalty_value
    }

    /// Power-flow series solved so far, including the one for `I0`.
    pub fn pf_calls(&self) -> usize {
        self.pf_calls.load(Ordering::Relaxed)
    }

    /// Returns `(fitness, feasible)`.
    pub fn evaluate(&self, c: &[Phase]) -> (f64, bool) {
        let a = PhaseAssignment::new(c.to_vec());
        match self.problem.binary_violation(&a) {
            Ok(None) => {}
            _ => return (self.penalty_value, false),
        }
        self.pf_calls.fetch_add(1, Ordering::Relaxed);
        match self.problem.evaluate(&a, self.space) {
            Ok(e) if e.objective.is_finite() => {
                let feasible = e.violation.is_none();
                let pen = if feasible { 0.0 } else { self.penalty_value };
                (e.objective + pen, feasible)
            }
            _ => (2.0 * self.penalty_value, false),
        }
    }
}

struct Evaluator<'a> {
    fitness: Fitness<'a>,
    cache: HashMap<Vec<Phase>, (f64, bool)>,
    calls: usize,
}

impl Evaluator<'_> {
    fn batch(&mut self, pop: &[Vec<Phase>]) -> Vec<(f64, bool)> {
        self.calls += pop.len();
        let mut fresh: Vec<&Vec<Phase>> = Vec::new();
        for c in pop {
            if !self.cache.contains_key(c) && !fresh.contains(&c) {
                fresh.push(c);
            }
        }
        let fitness = &self.fitness;
        let values: Vec<(f64, bool)> = fresh.par_iter().map(|c| fitness.evaluate(c)).collect();
        for (c, v) in fresh.into_iter().zip(values) {
            self.cache.insert(c.clone(), v);
        }
        pop.iter().map(|c| self.cache[c]).collect()
    }
}

fn stats(generation: usize, sorted_fitness: &[f64]) -> GenerationStats {
    let n = sorted_fitness.len();
    let median =
        if n % 2 == 1 { sorted_fitness[n / 2] } else { 0.5 * (sorted_fitness[n / 2 - 1] + sorted_fitness[n / 2]) };
    GenerationStats { generation, best: sorted_fitness[0], median, worst: sorted_fitness[n - 1] }
}

/// Runs the GA until `max_fitness_calls` is reached. Deterministic for a given seed,
/// independent of the rayon thread count.
pub fn run_ga(problem: &Problem, config: &GaConfig) -> Result<GaResult> {
    config.validate()?;
    let fitness = Fitness::new(problem, config.space, config.penalty)?;
    let c0 = problem.original().phases().to_vec();
    let n = c0.len();
    if n == 0 {
        return Ok(GaResult {
            best: PhaseAssignment::new(c0),
            best_fitness: fitness.i0(),
            trace: vec![GenerationStats {
                generation: 0,
                best: fitness.i0(),
                median: fitness.i0(),
                worst: fitness.i0(),
            }],
            fitness_calls: 1,
            pf_calls: fitness.pf_calls(),
            feasible: true,
        });
    }
    let p = config.population_size;
    let pm = config.mutation_prob.unwrap_or(1.0 / n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut pop: Vec<Vec<Phase>> = Vec::with_capacity(p);
    pop.push(c0);
    while pop.len() < p {
        pop.push((0..n).map(|_| Phase::from_index(rng.gen_range(0..3))).collect());
    }
    let mut ev = Evaluator { fitness, cache: HashMap::new(), calls: 0 };
    let mut fit = ev.batch(&pop);
    let order = sorted_order(&fit);
    pop = order.iter().map(|&i| pop[i].clone()).collect();
    fit = order.iter().map(|&i| fit[i]).collect();
    let mut trace = vec![stats(0, &fit.iter().map(|f| f.0).collect::<Vec<_>>())];

    let mut generation = 0;
    while ev.calls < config.max_fitness_calls {
        generation += 1;
        let values: Vec<f64> = fit.iter().map(|f| f.0).collect();
        let pairs = tournament_select(&values, p / 2, &mut rng);
        let mut offspring = Vec::with_capacity(p);
        for (a, b) in pairs {
            let (mut x, mut y) = crossover_single_point(&pop[a], &pop[b], config.crossover_prob, &mut rng)?;
            mutate_random_reset(&mut x, pm, &mut rng);
            mutate_random_reset(&mut y, pm, &mut rng);
            offspring.push(x);
            offspring.push(y);
        }
        let off_fit = ev.batch(&offspring);
        pop.extend(offspring);
        fit.extend(off_fit);
        let order = sorted_order(&fit);
        pop = order[..p].iter().map(|&i| pop[i].clone()).collect();
        fit = order[..p].iter().map(|&i| fit[i]).collect();
        trace.push(stats(generation, &fit.iter().map(|f| f.0).collect::<Vec<_>>()));
    }

    Ok(GaResult {
        best: PhaseAssignment::new(pop[0].clone()),
        best_fitness: fit[0].0,
        trace,
        fitness_calls: ev.calls,
        pf_calls: ev.fitness.pf_calls(),
        feasible: fit[0].1,
    })
}

/// Indices sorted by fitness; ties keep insertion order.
fn sorted_order(fit: &[(f64, bool)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fit.len()).collect();
    idx.sort_by(|&a, &b| fit[a].0.total_cmp(&fit[b].0));
    idx
}

/// Convergence trace as CSV: `generation,best,median,worst`.
pub fn write_trace_csv<W: Write>(trace: &[GenerationStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for s in trace {
        w.serialize(s).map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("trace", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::fixtures;
    use crate::metrics::{Metric, ObjectiveSpec};
    use crate::netmodel::ConstraintConfig;

    fn problem(delta: usize, metric: Metric) -> Problem {
        let (feeder, loads) = fixtures::fixture_b();
        let cfg = ConstraintConfig::new(&feeder, delta);
        let spec = ObjectiveSpec::new(&feeder, metric);
        Problem::new(feeder, loads, cfg, spec).unwrap()
    }

    #[test]
    fn original_scores_i0_and_budget_violation_is_penalized_without_pf() {
        let p = problem(1, Metric::PU);
        let f = Fitness::new(&p, Space::ExactPf, 100.0).unwrap();
        let (v, feasible) = f.evaluate(p.original().phases());
        assert_eq!(v, f.i0());
        assert!(feasible);
        let before = f.pf_calls();
        let (v, feasible) = f.evaluate(&[Phase::One, Phase::Two, Phase::Three]);
        assert_eq!(v, 100.0 * f.i0());
        assert!(!feasible);
        assert_eq!(f.pf_calls(), before);
    }

    #[test]
    fn zero_budget_returns_original() {
        let p = problem(0, Metric::PU);
        let cfg = GaConfig { max_fitness_calls: 400, ..GaConfig::default() };
        let r = run_ga(&p, &cfg).unwrap();
        assert_eq!(r.best, p.original());
        let i0 = Fitness::new(&p, Space::ExactPf, 100.0).unwrap().i0();
        assert_eq!(r.best_fitness, i0);
        assert!(r.feasible);
    }

    #[test]
    fn trace_is_monotone_and_calls_bounded() {
        let p = problem(3, Metric::PU);
        let cfg = GaConfig { max_fitness_calls: 700, population_size: 20, seed: 9, ..GaConfig::default() };
        let r = run_ga(&p, &cfg).unwrap();
        assert!(r.trace.windows(2).all(|w| w[1].best <= w[0].best));
        assert!(r.fitness_calls >= 700 && r.fitness_calls <= 700 + 20);
        // 27 distinct candidates at most, plus the I0 solve.
        assert!(r.pf_calls <= 28);
    }

    #[test]
    fn same_seed_same_result() {
        let p = problem(2, Metric::PvurStar);
        let cfg = GaConfig { max_fitness_calls: 300, population_size: 10, seed: 42, ..GaConfig::default() };
        let a = run_ga(&p, &cfg).unwrap();
        let b = run_ga(&p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig { population_size: 3, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { crossover_prob: 1.5, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { penalty: 1.0, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig::default().validate().is_ok());
    }

    #[test]
    fn trace_csv_has_header() {
        let mut buf = Vec::new();
        write_trace_csv(&[GenerationStats { generation: 0, best: 1.0, median: 2.0, worst: 3.0 }], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("generation,best,median,worst\n0,1.0,2.0,3.0"));
    }
}
