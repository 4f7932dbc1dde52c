//! Fundamental-diagram calibration from density quartets.
//!
//! Only `v_f` and `k_c` are searched; `k_j` comes from the minimum headway.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::ga::{self, AdaptiveMutation, GaParams, GeneBounds, MutationThreshold};
use crate::grid::GridSpec;
use crate::matrix::Quartet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub fd: FdParams,
    /// RMSE (veh/m) of the one-step prediction over all quartets.
    pub rmse: f64,
    pub quartets: usize,
    pub ga_trace: Vec<f64>,
}

/// Hyperparameters used for calibration unless configured otherwise.
pub fn default_params() -> GaParams {
    GaParams {
        population_size: 56,
        generations: 100,
        k_tournament: 5,
        mating_pool_size: None,
        crossover_fraction: 20,
        mutation: AdaptiveMutation::new(0.65, 0.35),
        threshold: MutationThreshold::PopulationMean,
        restarts: 5,
    }
}

/// One CTM update of the quartet's middle cell.
pub fn predict_next(fd: &FdParams, grid: &GridSpec, q: &Quartet) -> f64 {
    let kj = fd.k_j();
    let up = q.k_up.clamp(0.0, kj);
    let mid = q.k_mid.clamp(0.0, kj);
    let down = q.k_down.clamp(0.0, kj);
    let next = mid + grid.courant_ratio() * (fd.flow_unchecked(up, mid) - fd.flow_unchecked(mid, down));
    next.clamp(0.0, kj)
}

/// Root-mean-square one-step prediction error over `quartets`.
pub fn quartet_rmse(fd: &FdParams, grid: &GridSpec, quartets: &[Quartet]) -> f64 {
    let sse: f64 = quartets
        .iter()
        .map(|q| {
            let e = predict_next(fd, grid, q) - q.k_next;
            e * e
        })
        .sum();
    (sse / quartets.len() as f64).sqrt()
}

/// Gene box: `v_f` in `(0, dx/dt]`, `k_c` in `(0, k_j / 2)`.
pub fn gene_bounds(grid: &GridSpec, k_j: f64) -> Vec<GeneBounds> {
    let v_max = grid.max_speed();
    vec![
        GeneBounds::new(v_max * 1e-6, v_max),
        GeneBounds::new(k_j * 1e-9, k_j / 2.0 * (1.0 - 1e-9)),
    ]
}

pub fn calibrate_fd(
    quartets: &[Quartet],
    grid: &GridSpec,
    k_j: f64,
    params: &GaParams,
    seed: u64,
) -> Result<CalibrationResult> {
    if quartets.is_empty() {
        return Err(Error::Empty("calibration needs at least one quartet".into()));
    }
    if !(k_j > 0.0 && k_j.is_finite()) {
        return Err(Error::Config(format!("k_j must be positive, got {k_j}")));
    }
    let fitness = |g: &[f64]| match FdParams::new(g[0], g[1], k_j) {
        Ok(fd) => -quartet_rmse(&fd, grid, quartets),
        Err(_) => f64::NAN,
    };
    let res = ga::run_restarts(params, &gene_bounds(grid, k_j), seed, fitness)?;
    let fd = FdParams::new(res.best_genome[0], res.best_genome[1], k_j)?;
    fd.check_cfl(grid)?;
    Ok(CalibrationResult {
        fd,
        rmse: -res.best_fitness,
        quartets: quartets.len(),
        ga_trace: res.fitness_trace,
    })
}
