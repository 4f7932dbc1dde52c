//! Space-time discretization of a single link.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DIVISIBILITY_TOL: f64 = 1e-9;

/// Link length `L`, horizon `T` and cell size `dx` x `dt`.
///
/// The cell counts `alpha = L / dx` and `beta = T / dt` must be exact
/// integers; construction fails otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct GridSpec {
    link_length: f64,
    total_time: f64,
    dx: f64,
    dt: f64,
    alpha: usize,
    beta: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawGrid {
    link_length: f64,
    total_time: f64,
    dx: f64,
    dt: f64,
}

impl TryFrom<RawGrid> for GridSpec {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        GridSpec::new(raw.link_length, raw.total_time, raw.dx, raw.dt)
    }
}

impl From<GridSpec> for RawGrid {
    fn from(g: GridSpec) -> Self {
        RawGrid {
            link_length: g.link_length,
            total_time: g.total_time,
            dx: g.dx,
            dt: g.dt,
        }
    }
}

fn exact_count(total: f64, step: f64, what: &str) -> Result<usize> {
    let n = (total / step).round();
    if (n * step - total).abs() > DIVISIBILITY_TOL * total.max(1.0) {
        return Err(Error::Config(format!(
            "{what}: {total} is not an integer multiple of {step}"
        )));
    }
    Ok(n as usize)
}

impl GridSpec {
    pub fn new(link_length: f64, total_time: f64, dx: f64, dt: f64) -> Result<Self> {
        for (name, v) in [
            ("link_length", link_length),
            ("total_time", total_time),
            ("dx", dx),
            ("dt", dt),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("grid.{name} must be positive, got {v}")));
            }
        }
        let alpha = exact_count(link_length, dx, "grid.link_length / grid.dx")?;
        let beta = exact_count(total_time, dt, "grid.total_time / grid.dt")?;
        if alpha < 3 || beta < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 3 space cells and 2 time cells, got {alpha}x{beta}"
            )));
        }
        Ok(GridSpec {
            link_length,
            total_time,
            dx,
            dt,
            alpha,
            beta,
        })
    }

    pub fn link_length(&self) -> f64 {
        self.link_length
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of space cells.
    pub fn alpha(&self) -> usize {
        self.alpha
    }

    /// Number of time cells.
    pub fn beta(&self) -> usize {
        self.beta
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dt
    }

    /// `dt / dx`, the CTM update ratio.
    pub fn courant_ratio(&self) -> f64 {
        self.dt / self.dx
    }

    /// Largest free-flow speed the explicit update tolerates.
    pub fn max_speed(&self) -> f64 {
        self.dx / self.dt
    }

    /// Space cell containing `x`. Points on an interior edge belong to the
    /// higher-index cell; `x = L` belongs to the last cell.
    pub fn space_cell(&self, x: f64) -> usize {
        index_of(x, self.dx, self.alpha)
    }

    /// Time cell containing `t`, with the same edge convention as [`space_cell`](Self::space_cell).
    pub fn time_cell(&self, t: f64) -> usize {
        index_of(t, self.dt, self.beta)
    }
}

fn index_of(v: f64, step: f64, n: usize) -> usize {
    if v <= 0.0 {
        return 0;
    }
    ((v / step).floor() as usize).min(n - 1)
}
