//! Hyperparameter grid searches over the two GA stages.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::calibrate_fd;
use crate::discretize::write_atomic;
use crate::error::{Error, Result};
use crate::estimate::estimate_density;
use crate::fd::FdParams;
use crate::ga::{AdaptiveMutation, GaParams};
use crate::grid::GridSpec;
use crate::ingest::fmt_float;
use crate::matrix::{DensityMatrix, Quartet};
use crate::seed;

/// One searched hyperparameter and its candidate values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "values", rename_all = "snake_case")]
pub enum Axis {
    Generations(Vec<usize>),
    PopulationSize(Vec<usize>),
    KTournament(Vec<usize>),
    CrossoverFraction(Vec<usize>),
    Mutation(Vec<AdaptiveMutation>),
}

impl Axis {
    pub fn name(&self) -> &'static str {
        match self {
            Axis::Generations(_) => "generations",
            Axis::PopulationSize(_) => "population_size",
            Axis::KTournament(_) => "k_tournament",
            Axis::CrossoverFraction(_) => "crossover_fraction",
            Axis::Mutation(_) => "mutation",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Axis::Generations(v) | Axis::PopulationSize(v) | Axis::KTournament(v) | Axis::CrossoverFraction(v) => v.len(),
            Axis::Mutation(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, idx: usize, p: &mut GaParams) {
        match self {
            Axis::Generations(v) => p.generations = v[idx],
            Axis::PopulationSize(v) => p.population_size = v[idx],
            Axis::KTournament(v) => p.k_tournament = v[idx],
            Axis::CrossoverFraction(v) => p.crossover_fraction = v[idx],
            Axis::Mutation(v) => p.mutation = v[idx],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpecSearch {
    pub axes: Vec<Axis>,
    pub fixed: GaParams,
    /// GA restarts per lattice point; the best is kept.
    #[serde(default = "one")]
    pub repetitions: usize,
    pub rng_seed: u64,
    #[serde(default = "default_cap")]
    pub max_points: usize,
    /// Sets the crossover fraction to half the population at every point.
    #[serde(default)]
    pub crossover_half_population: bool,
}

fn one() -> usize {
    1
}

fn default_cap() -> usize {
    1000
}

/// One evaluated lattice point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRow {
    /// Position in the lattice enumeration (last axis varies fastest).
    pub point: usize,
    /// Value index per axis.
    pub indices: Vec<usize>,
    pub params: GaParams,
    pub fitness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTable {
    pub axes: Vec<Axis>,
    /// Sorted by fitness, best first.
    pub rows: Vec<SearchRow>,
}

impl GridSpecSearch {
    pub fn lattice_size(&self) -> usize {
        self.axes.iter().map(Axis::len).product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::Config("gridsearch.axes must not be empty".into()));
        }
        if let Some(a) = self.axes.iter().find(|a| a.is_empty()) {
            return Err(Error::Config(format!("gridsearch axis `{}` has no values", a.name())));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("gridsearch.repetitions must be >= 1".into()));
        }
        let n = self.lattice_size();
        if n > self.max_points {
            return Err(Error::Config(format!(
                "gridsearch lattice has {n} points, above max_points = {}",
                self.max_points
            )));
        }
        for (_, p) in self.points() {
            p.validate()?;
        }
        Ok(())
    }

    /// Cartesian product of the axes with the resulting GA parameters.
    pub fn points(&self) -> Vec<(Vec<usize>, GaParams)> {
        let mut out = Vec::with_capacity(self.lattice_size());
        let mut idx = vec![0usize; self.axes.len()];
        for _ in 0..self.lattice_size() {
            let mut p = self.fixed.clone();
            p.restarts = self.repetitions;
            for (a, &i) in self.axes.iter().zip(&idx) {
                a.apply(i, &mut p);
            }
            if self.crossover_half_population {
                p.crossover_fraction = p.population_size / 2;
            }
            out.push((idx.clone(), p));
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < self.axes[d].len() {
                    break;
                }
                idx[d] = 0;
            }
        }
        out
    }

    fn run<F>(&self, fitness: F) -> Result<SearchTable>
    where
        F: Fn(&GaParams, u64) -> Result<f64> + Sync,
    {
        self.validate()?;
        let mut rows = self
            .points()
            .into_par_iter()
            .enumerate()
            .map(|(point, (indices, params))| {
                let fitness = fitness(&params, seed::derive(self.rng_seed, point as u64))?;
                Ok(SearchRow {
                    point,
                    indices,
                    params,
                    fitness,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.sort_by(|a, b| b.fitness.total_cmp(&a.fitness).then(a.point.cmp(&b.point)));
        Ok(SearchTable {
            axes: self.axes.clone(),
            rows,
        })
    }
}

/// Calibration search: fitness is the negative quartet RMSE.
pub fn search_fd(quartets: &[Quartet], grid: &GridSpec, k_j: f64, search: &GridSpecSearch) -> Result<SearchTable> {
    if quartets.is_empty() {
        return Err(Error::Empty("fd search needs at least one quartet".into()));
    }
    search.run(|p, s| Ok(-calibrate_fd(quartets, grid, k_j, p, s)?.rmse))
}

/// Boundary search: fitness is the mean over diagrams of each diagram's
/// best estimation fitness.
pub fn search_boundary(partials: &[DensityMatrix], fd: &FdParams, search: &GridSpecSearch) -> Result<SearchTable> {
    if partials.is_empty() {
        return Err(Error::Empty("boundary search needs at least one diagram".into()));
    }
    search.run(|p, s| {
        let total = partials
            .iter()
            .enumerate()
            .map(|(d, m)| estimate_density(m, fd, p, seed::derive(s, d as u64)).map(|r| r.fitness))
            .sum::<Result<f64>>()?;
        Ok(total / partials.len() as f64)
    })
}

fn mutation_pairs(pairs: &[(f64, f64)]) -> Vec<AdaptiveMutation> {
    pairs.iter().map(|&(a, b)| AdaptiveMutation::new(a, b)).collect()
}

/// Calibration lattice: 5 generation counts x 4 tournament sizes x 3
/// mutation pairs at population 56 and crossover fraction 20.
pub fn fd_search(fixed: &GaParams, rng_seed: u64) -> GridSpecSearch {
    GridSpecSearch {
        axes: vec![
            Axis::Generations(vec![20, 40, 60, 80, 100]),
            Axis::KTournament(vec![2, 5, 7, 10]),
            Axis::Mutation(mutation_pairs(&[(0.9, 0.1), (0.75, 0.25), (0.5, 0.5)])),
        ],
        fixed: GaParams {
            population_size: 56,
            crossover_fraction: 20,
            ..fixed.clone()
        },
        repetitions: 1,
        rng_seed,
        max_points: default_cap(),
        crossover_half_population: false,
    }
}

/// Boundary phase one: tournament size x mutation pair at population 500,
/// 60 generations, crossover fraction 250.
pub fn boundary_phase_one(fixed: &GaParams, rng_seed: u64) -> GridSpecSearch {
    GridSpecSearch {
        axes: vec![
            Axis::KTournament(vec![2, 4, 6, 8, 10]),
            Axis::Mutation(mutation_pairs(&[(0.9, 0.1), (0.8, 0.2), (0.7, 0.3), (0.6, 0.4), (0.5, 0.5)])),
        ],
        fixed: GaParams {
            population_size: 500,
            generations: 60,
            crossover_fraction: 250,
            ..fixed.clone()
        },
        repetitions: 1,
        rng_seed,
        max_points: default_cap(),
        crossover_half_population: false,
    }
}

/// Boundary phase two: population x generations with mutation (0.9, 0.1),
/// tournament size 10 and crossover fraction half the population.
pub fn boundary_phase_two(fixed: &GaParams, rng_seed: u64) -> GridSpecSearch {
    GridSpecSearch {
        axes: vec![
            Axis::PopulationSize(vec![100, 200, 400, 600, 800]),
            Axis::Generations(vec![40, 60, 80, 100, 120]),
        ],
        fixed: GaParams {
            k_tournament: 10,
            mutation: AdaptiveMutation::new(0.9, 0.1),
            ..fixed.clone()
        },
        repetitions: 1,
        rng_seed,
        max_points: default_cap(),
        crossover_half_population: true,
    }
}

impl SearchTable {
    /// Mean fitness over rows whose value on axis `axis` has index `value_idx`.
    pub fn mean_fitness_at(&self, axis: usize, value_idx: usize) -> Option<f64> {
        let f: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.indices.get(axis) == Some(&value_idx))
            .map(|r| r.fitness)
            .collect();
        (!f.is_empty()).then(|| f.iter().sum::<f64>() / f.len() as f64)
    }

    /// CSV with one column per axis value (mutation spans two) plus fitness.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = vec!["rank", "point"];
        for a in &self.axes {
            match a {
                Axis::Mutation(_) => header.extend(["mutation_low_fitness", "mutation_high_fitness"]),
                other => header.push(other.name()),
            }
        }
        header.extend(["population_size_used", "crossover_fraction_used", "fitness"]);
        out.push_str(&header.join(","));
        out.push('\n');
        for (rank, r) in self.rows.iter().enumerate() {
            let mut cells = vec![rank.to_string(), r.point.to_string()];
            for (a, &i) in self.axes.iter().zip(&r.indices) {
                match a {
                    Axis::Mutation(v) => {
                        cells.push(fmt_float(v[i].p_low_fitness));
                        cells.push(fmt_float(v[i].p_high_fitness));
                    }
                    Axis::Generations(v) | Axis::PopulationSize(v) | Axis::KTournament(v) | Axis::CrossoverFraction(v) => {
                        cells.push(v[i].to_string())
                    }
                }
            }
            cells.push(r.params.population_size.to_string());
            cells.push(r.params.crossover_fraction.to_string());
            cells.push(format!("{:.12e}", r.fitness));
            writeln!(out, "{}", cells.join(",")).expect("writing to a String");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}
