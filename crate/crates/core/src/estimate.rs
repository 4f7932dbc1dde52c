//! Boundary-condition estimation and density-field completion.

use serde::{Deserialize, Serialize};

use crate::ctm::{ctm_run, run_into};
use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::grid::GridSpec;
use crate::ga::{self, AdaptiveMutation, GaParams, GeneBounds, MutationThreshold};
use crate::matrix::{BoundaryVector, DensityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationResult {
    pub boundary: BoundaryVector,
    pub completed: DensityMatrix,
    /// Negative RMSE over the observed cells of the partial matrix.
    pub fitness: f64,
    pub initial_best_fitness: f64,
    pub ga_trace: Vec<f64>,
}

/// Hyperparameters used for boundary estimation unless configured otherwise.
pub fn default_params() -> GaParams {
    GaParams {
        population_size: 500,
        generations: 60,
        k_tournament: 10,
        mating_pool_size: None,
        crossover_fraction: 50,
        mutation: AdaptiveMutation::new(0.9, 0.1),
        threshold: MutationThreshold::PopulationMean,
        restarts: 5,
    }
}

/// Negative RMSE between a CTM rollout of `genome` and the observed cells.
struct Objective<'a> {
    fd: &'a FdParams,
    partial: &'a DensityMatrix,
    observed: Vec<(usize, f64)>,
}

impl<'a> Objective<'a> {
    fn new(fd: &'a FdParams, partial: &'a DensityMatrix) -> Self {
        let beta = partial.beta();
        let observed = partial
            .observed_cells()
            .map(|(i, j, k)| (i * beta + j, k))
            .collect();
        Objective { fd, partial, observed }
    }

    fn eval(&self, genome: &[f64]) -> f64 {
        let g = self.partial.grid();
        let (a, b) = (g.alpha(), g.beta());
        let mut buf = vec![0.0; a * b];
        run_into(self.fd, g, &genome[..a], &genome[a..a + b], &genome[a + b..], &mut buf);
        let sse: f64 = self
            .observed
            .iter()
            .map(|&(idx, k)| {
                let e = buf[idx] - k;
                e * e
            })
            .sum();
        -(sse / self.observed.len() as f64).sqrt()
    }
}

/// Fitness of a boundary vector against the observed cells of `partial`.
pub fn boundary_fitness(partial: &DensityMatrix, fd: &FdParams, bv: &BoundaryVector) -> Result<f64> {
    if partial.observed_count() == 0 {
        return Err(Error::Empty("partial matrix has no observed cells".into()));
    }
    bv.validate(partial.grid(), fd.k_j())?;
    Ok(Objective::new(fd, partial).eval(&bv.to_genome()))
}

pub fn estimate_density(
    partial: &DensityMatrix,
    fd: &FdParams,
    params: &GaParams,
    seed: u64,
) -> Result<EstimationResult> {
    if partial.observed_count() == 0 {
        return Err(Error::Empty("partial matrix has no observed cells".into()));
    }
    let grid = *partial.grid();
    fd.check_cfl(&grid)?;
    let objective = Objective::new(fd, partial);
    let bounds = vec![GeneBounds::new(0.0, fd.k_j()); BoundaryVector::genome_len(&grid)];
    let res = ga::run_restarts(params, &bounds, seed, |g: &[f64]| objective.eval(g))?;
    let boundary = BoundaryVector::from_genome(&grid, &res.best_genome)?;
    let completed = ctm_run(fd, &grid, &boundary)?;
    Ok(EstimationResult {
        boundary,
        completed,
        fitness: res.best_fitness,
        initial_best_fitness: res.initial_best_fitness,
        ga_trace: res.fitness_trace,
    })
}

/// CTM rollout under known parameters: the comparison baseline. `bv_true`
/// is normally [`BoundaryVector::from_edges`] of the ground-truth matrix.
pub fn baseline_known(grid: &GridSpec, fd_true: &FdParams, bv_true: &BoundaryVector) -> Result<DensityMatrix> {
    ctm_run(fd_true, grid, bv_true)
}
