//! Real-valued genetic algorithm: K-way tournament selection, uniform
//! crossover, two-rate adaptive mutation and elitism of one.
//!
//! One generation:
//!
//! 1. the mating pool is filled by tournament selection on the current
//!    population;
//! 2. consecutive pool members are paired and recombined by uniform
//!    crossover, `crossover_fraction` pairs per generation;
//! 3. the next population is the elite, the offspring, then pool parents
//!    until `population_size` slots are filled;
//! 4. every non-elite member is mutated with the per-gene probability picked
//!    by comparing its fitness to the current population's threshold.
//!
//! Fitness is maximized. Evaluations run on the rayon pool and are merged by
//! candidate index; all randomness comes from one seeded stream driven on the
//! calling thread, so results do not depend on the worker count.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Rounds of resampling for candidates whose fitness is not finite.
const MAX_RESAMPLE_ROUNDS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneBounds {
    pub lo: f64,
    pub hi: f64,
}

impl GeneBounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        GeneBounds { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        rng.random_range(self.lo..=self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Fitness reference that splits "low" from "high" fitness candidates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationThreshold {
    #[default]
    PopulationMean,
    PopulationMedian,
}

/// Per-gene mutation probabilities for candidates below / at-or-above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveMutation {
    pub p_low_fitness: f64,
    pub p_high_fitness: f64,
}

impl AdaptiveMutation {
    pub fn new(p_low_fitness: f64, p_high_fitness: f64) -> Self {
        AdaptiveMutation {
            p_low_fitness,
            p_high_fitness,
        }
    }
}

/// Hyperparameters shared by both optimization stages. These are what the
/// run configuration file carries; gene bounds and the seed are attached
/// by the stage that runs the GA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub k_tournament: usize,
    /// Defaults to `population_size`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mating_pool_size: Option<usize>,
    /// Offspring pairs produced per generation.
    pub crossover_fraction: usize,
    pub mutation: AdaptiveMutation,
    #[serde(default)]
    pub threshold: MutationThreshold,
    /// Independent GA runs per problem; the best result is kept.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    5
}

impl GaParams {
    pub fn with_bounds(&self, gene_bounds: Vec<GeneBounds>, rng_seed: u64) -> GaConfig {
        GaConfig {
            params: self.clone(),
            gene_bounds,
            rng_seed,
        }
    }

    pub fn mating_pool(&self) -> usize {
        self.mating_pool_size.unwrap_or(self.population_size)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if p.population_size < 2 {
            return Err(Error::Config(format!(
                "population_size must be >= 2, got {}",
                p.population_size
            )));
        }
        if p.k_tournament < 2 || p.k_tournament > p.population_size {
            return Err(Error::Config(format!(
                "k_tournament must lie in [2, population_size = {}], got {}",
                p.population_size, p.k_tournament
            )));
        }
        if p.mating_pool() < 2 {
            return Err(Error::Config("mating_pool_size must be >= 2".into()));
        }
        for (name, v) in [
            ("p_low_fitness", p.mutation.p_low_fitness),
            ("p_high_fitness", p.mutation.p_high_fitness),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("mutation.{name} must lie in [0, 1], got {v}")));
            }
        }
        if p.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

/// A fully specified GA run.
#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub params: GaParams,
    pub gene_bounds: Vec<GeneBounds>,
    pub rng_seed: u64,
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.gene_bounds.is_empty() {
            return Err(Error::Config("genome needs at least one gene".into()));
        }
        if let Some((i, b)) = self
            .gene_bounds
            .iter()
            .enumerate()
            .find(|(_, b)| !(b.lo.is_finite() && b.hi.is_finite() && b.lo < b.hi))
        {
            return Err(Error::Config(format!(
                "gene {i}: bounds [{}, {}] need lo < hi",
                b.lo, b.hi
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaResult {
    pub best_genome: Vec<f64>,
    pub best_fitness: f64,
    /// Best fitness after initialization (index 0) and after each generation.
    pub fitness_trace: Vec<f64>,
    /// Fitness of the best member of the initial population.
    pub initial_best_fitness: f64,
    pub evaluations: u64,
}

/// Index of the fittest among `k` candidates drawn without replacement.
pub fn tournament_select(fitnesses: &[f64], k: usize, rng: &mut ChaCha8Rng) -> usize {
    let n = fitnesses.len();
    let k = k.clamp(1, n);
    let mut best: Option<usize> = None;
    for i in index::sample(rng, n, k) {
        if best.is_none_or(|b| fitnesses[i] > fitnesses[b]) {
            best = Some(i);
        }
    }
    best.expect("k >= 1")
}

/// Routes each locus of the parents to the children by a fair coin.
pub fn uniform_crossover(a: &[f64], b: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    debug_assert_eq!(a.len(), b.len());
    let mut ca = Vec::with_capacity(a.len());
    let mut cb = Vec::with_capacity(b.len());
    for (&ga, &gb) in a.iter().zip(b) {
        if rng.random_bool(0.5) {
            ca.push(ga);
            cb.push(gb);
        } else {
            ca.push(gb);
            cb.push(ga);
        }
    }
    (ca, cb)
}

/// Resamples each gene uniformly within its bounds with probability
/// `p_low_fitness` when `fitness < threshold`, `p_high_fitness` otherwise.
/// Returns whether any gene changed.
pub fn adaptive_mutate(
    genome: &mut [f64],
    fitness: f64,
    threshold: f64,
    mutation: &AdaptiveMutation,
    bounds: &[GeneBounds],
    rng: &mut ChaCha8Rng,
) -> bool {
    let p = if fitness < threshold {
        mutation.p_low_fitness
    } else {
        mutation.p_high_fitness
    };
    if p <= 0.0 {
        return false;
    }
    let mut changed = false;
    for (g, b) in genome.iter_mut().zip(bounds) {
        if rng.random_bool(p) {
            *g = b.sample(rng);
            changed = true;
        }
    }
    changed
}

fn threshold_of(rule: MutationThreshold, fitnesses: &[f64]) -> f64 {
    match rule {
        MutationThreshold::PopulationMean => fitnesses.iter().sum::<f64>() / fitnesses.len() as f64,
        MutationThreshold::PopulationMedian => {
            let mut v = fitnesses.to_vec();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        }
    }
}

struct Evaluator<'f, F> {
    fitness: &'f F,
    count: u64,
}

impl<F> Evaluator<'_, F>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval(&mut self, genomes: &[Vec<f64>], which: &[usize]) -> Vec<f64> {
        self.count += which.len() as u64;
        let f = self.fitness;
        which.par_iter().map(|&i| f(&genomes[i])).collect()
    }

    /// Evaluates `which`, resampling members whose fitness is not finite.
    /// Returns `false` if some member never produced a finite value.
    fn eval_with_resample(
        &mut self,
        genomes: &mut [Vec<f64>],
        fit: &mut [f64],
        which: &[usize],
        bounds: &[GeneBounds],
        rng: &mut ChaCha8Rng,
    ) -> bool {
        let mut pending: Vec<usize> = which.to_vec();
        for _ in 0..MAX_RESAMPLE_ROUNDS {
            if pending.is_empty() {
                return true;
            }
            let vals = self.eval(genomes, &pending);
            let mut bad = Vec::new();
            for (&i, v) in pending.iter().zip(vals) {
                if v.is_finite() {
                    fit[i] = v;
                } else {
                    for (g, b) in genomes[i].iter_mut().zip(bounds) {
                        *g = b.sample(rng);
                    }
                    bad.push(i);
                }
            }
            pending = bad;
        }
        pending.is_empty()
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Runs the GA to completion.
pub fn run<F>(config: &GaConfig, fitness: F) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    run_observed(config, fitness, |_, _, _| {})
}

/// Like [`run`], calling `observe(generation, population, fitnesses)` after
/// initialization (generation 0) and after every generation.
pub fn run_observed<F, O>(config: &GaConfig, fitness: F, observe: O) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(usize, &[Vec<f64>], &[f64]),
{
    run_from(config, None, fitness, observe)
}

/// Runs the GA from a caller-supplied initial population instead of a
/// uniform sample. Every genome must match the gene bounds.
pub fn run_from<F, O>(
    config: &GaConfig,
    initial: Option<Vec<Vec<f64>>>,
    fitness: F,
    mut observe: O,
) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(usize, &[Vec<f64>], &[f64]),
{
    config.validate()?;
    let p = &config.params;
    let bounds = &config.gene_bounds;
    let n = p.population_size;
    let mut rng = seed::rng(config.rng_seed);
    let mut ev = Evaluator {
        fitness: &fitness,
        count: 0,
    };

    let mut pop: Vec<Vec<f64>> = match initial {
        Some(pop) => {
            let ok = pop.len() == n
                && pop.iter().all(|g| {
                    g.len() == bounds.len() && g.iter().zip(bounds).all(|(v, b)| b.contains(*v))
                });
            if !ok {
                return Err(Error::Config(format!(
                    "initial population must hold {n} genomes of {} in-bounds genes",
                    bounds.len()
                )));
            }
            pop
        }
        None => (0..n)
            .map(|_| bounds.iter().map(|b| b.sample(&mut rng)).collect())
            .collect(),
    };
    let mut fit = vec![f64::NEG_INFINITY; n];
    let all: Vec<usize> = (0..n).collect();
    let first = ev.eval(&pop, &all);
    if first.iter().all(|v| !v.is_finite()) {
        return Err(Error::Optimizer(
            "fitness is non-finite for the whole initial population".into(),
        ));
    }
    let bad: Vec<usize> = first
        .iter()
        .enumerate()
        .filter(|(_, v)| !v.is_finite())
        .map(|(i, _)| i)
        .collect();
    for (i, v) in first.into_iter().enumerate() {
        fit[i] = v;
    }
    for &i in &bad {
        for (g, b) in pop[i].iter_mut().zip(bounds) {
            *g = b.sample(&mut rng);
        }
    }
    if !ev.eval_with_resample(&mut pop, &mut fit, &bad, bounds, &mut rng) {
        return Err(Error::Optimizer("could not resample a finite initial population".into()));
    }

    let mut best = argmax(&fit);
    let initial_best_fitness = fit[best];
    let mut trace = Vec::with_capacity(p.generations + 1);
    trace.push(fit[best]);
    observe(0, &pop, &fit);

    let pool_size = p.mating_pool();
    for generation in 1..=p.generations {
        let threshold = threshold_of(p.threshold, &fit);

        let pool: Vec<usize> = (0..pool_size)
            .map(|_| tournament_select(&fit, p.k_tournament, &mut rng))
            .collect();

        let mut next: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut next_fit: Vec<f64> = Vec::with_capacity(n);
        next.push(pop[best].clone());
        next_fit.push(fit[best]);

        let mut children = Vec::new();
        for pair in 0..p.crossover_fraction {
            if next.len() + children.len() >= n {
                break;
            }
            let a = pool[(2 * pair) % pool_size];
            let b = pool[(2 * pair + 1) % pool_size];
            let (ca, cb) = uniform_crossover(&pop[a], &pop[b], &mut rng);
            children.push(ca);
            if next.len() + children.len() < n {
                children.push(cb);
            }
        }
        let first_child = next.len();
        let n_children = children.len();
        next.extend(children);
        next_fit.extend(std::iter::repeat_n(f64::NAN, n_children));

        let mut cursor = 2 * p.crossover_fraction;
        while next.len() < n {
            let idx = pool[cursor % pool_size];
            next.push(pop[idx].clone());
            next_fit.push(fit[idx]);
            cursor += 1;
        }

        // children need a fitness before the mutation rate can be chosen
        let child_idx: Vec<usize> = (first_child..first_child + n_children).collect();
        if !ev.eval_with_resample(&mut next, &mut next_fit, &child_idx, bounds, &mut rng) {
            return Err(Error::Optimizer(format!(
                "generation {generation}: offspring fitness never finite"
            )));
        }

        let mut mutated = Vec::new();
        for i in 1..n {
            if adaptive_mutate(&mut next[i], next_fit[i], threshold, &p.mutation, bounds, &mut rng) {
                mutated.push(i);
            }
        }
        if !ev.eval_with_resample(&mut next, &mut next_fit, &mutated, bounds, &mut rng) {
            return Err(Error::Optimizer(format!(
                "generation {generation}: mutated fitness never finite"
            )));
        }

        pop = next;
        fit = next_fit;
        best = argmax(&fit);
        trace.push(fit[best]);
        observe(generation, &pop, &fit);
    }

    Ok(GaResult {
        best_genome: pop[best].clone(),
        best_fitness: fit[best],
        fitness_trace: trace,
        initial_best_fitness,
        evaluations: ev.count,
    })
}

/// Runs the GA `params.restarts` times with seeds derived from `base_seed`
/// and keeps the best run. Ties go to the earliest restart.
pub fn run_restarts<F>(
    params: &GaParams,
    bounds: &[GeneBounds],
    base_seed: u64,
    fitness: F,
) -> Result<GaResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    let mut best: Option<GaResult> = None;
    for r in 0..params.restarts {
        let cfg = params.with_bounds(bounds.to_vec(), seed::derive(base_seed, r as u64));
        let res = run(&cfg, &fitness)?;
        if best.as_ref().is_none_or(|b| res.best_fitness > b.best_fitness) {
            best = Some(res);
        }
    }
    Ok(best.expect("restarts >= 1"))
}
