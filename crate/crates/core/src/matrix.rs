//! Space-time density matrices, quartets and boundary vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// An `alpha x beta` grid of cell densities (veh/m). Rows are space cells,
/// columns are time cells. Unobserved cells hold no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    grid: GridSpec,
    cells: Vec<Option<f64>>,
}

impl DensityMatrix {
    /// A matrix with every cell unobserved.
    pub fn unobserved(grid: GridSpec) -> Self {
        DensityMatrix {
            cells: vec![None; grid.alpha() * grid.beta()],
            grid,
        }
    }

    /// A fully observed matrix filled with `k`.
    pub fn filled(grid: GridSpec, k: f64) -> Self {
        DensityMatrix {
            cells: vec![Some(k); grid.alpha() * grid.beta()],
            grid,
        }
    }

    /// Builds a fully observed matrix from `alpha` rows of `beta` values.
    pub fn from_rows(grid: GridSpec, rows: &[Vec<f64>]) -> Result<Self> {
        let opt: Vec<Vec<Option<f64>>> = rows
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        Self::from_optional_rows(grid, &opt)
    }

    pub fn from_optional_rows(grid: GridSpec, rows: &[Vec<Option<f64>>]) -> Result<Self> {
        if rows.len() != grid.alpha() || rows.iter().any(|r| r.len() != grid.beta()) {
            return Err(Error::Shape(format!(
                "expected {}x{} cells",
                grid.alpha(),
                grid.beta()
            )));
        }
        Ok(DensityMatrix {
            cells: rows.iter().flatten().copied().collect(),
            grid,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn alpha(&self) -> usize {
        self.grid.alpha()
    }

    pub fn beta(&self) -> usize {
        self.grid.beta()
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.alpha() && j < self.beta());
        i * self.grid.beta() + j
    }

    /// Density of space cell `i` during time cell `j`, if observed.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[self.idx(i, j)]
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.get(i, j).is_some()
    }

    pub fn set(&mut self, i: usize, j: usize, k: f64) {
        let idx = self.idx(i, j);
        self.cells[idx] = Some(k);
    }

    pub fn clear(&mut self, i: usize, j: usize) {
        let idx = self.idx(i, j);
        self.cells[idx] = None;
    }

    pub fn observed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.cells.iter().all(Option::is_some)
    }

    /// Row-major observation mask.
    pub fn mask(&self) -> Vec<bool> {
        self.cells.iter().map(Option::is_some).collect()
    }

    /// Iterates `(i, j, k)` over observed cells in row-major order.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let beta = self.grid.beta();
        self.cells
            .iter()
            .enumerate()
            .filter_map(move |(n, c)| c.map(|k| (n / beta, n % beta, k)))
    }

    /// Column `j` (all space cells at one time step), `None` if any cell is unobserved.
    pub fn column(&self, j: usize) -> Option<Vec<f64>> {
        (0..self.alpha()).map(|i| self.get(i, j)).collect()
    }

    /// Keeps only the cells marked in `mask` (row-major).
    pub fn restricted_to(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.cells.len() {
            return Err(Error::Shape("mask size differs from matrix".into()));
        }
        Ok(DensityMatrix {
            grid: self.grid,
            cells: self
                .cells
                .iter()
                .zip(mask)
                .map(|(c, &m)| if m { *c } else { None })
                .collect(),
        })
    }

    /// Mean over observed cells, `None` when nothing is observed.
    pub fn mean_observed(&self) -> Option<f64> {
        let n = self.observed_count();
        (n > 0).then(|| self.observed_cells().map(|(_, _, k)| k).sum::<f64>() / n as f64)
    }
}

/// Four observed densities tied together by one CTM update: the cell, its
/// upstream and downstream neighbours, and the cell one step later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartet {
    pub k_up: f64,
    pub k_mid: f64,
    pub k_down: f64,
    pub k_next: f64,
}

impl Quartet {
    pub fn new(k_up: f64, k_mid: f64, k_down: f64, k_next: f64) -> Self {
        Quartet {
            k_up,
            k_mid,
            k_down,
            k_next,
        }
    }
}

/// Initial densities of every space cell plus per-step boundary densities.
///
/// The flat genome layout is `[init (alpha) | inflow (beta) | outflow (beta)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVector {
    pub init: Vec<f64>,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

impl BoundaryVector {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::uniform(grid, 0.0)
    }

    pub fn uniform(grid: &GridSpec, k: f64) -> Self {
        BoundaryVector {
            init: vec![k; grid.alpha()],
            inflow: vec![k; grid.beta()],
            outflow: vec![k; grid.beta()],
        }
    }

    /// Boundary conditions read off a fully observed matrix: column 0 as the
    /// initial state, and for step `j` the first and last space cells of
    /// column `j + 1` as the inflow and outflow densities. The virtual cell
    /// beyond the edge at `t_j` is best represented by the edge cell one step
    /// later (exactly so in free flow at `v_f = dx / dt`). The final entries,
    /// which a rollout never reads, repeat the last column. Values are
    /// clipped into `[0, k_j]`.
    pub fn from_edges(matrix: &DensityMatrix, k_j: f64) -> Result<Self> {
        if !matrix.is_fully_observed() {
            return Err(Error::Domain(
                "boundary extraction needs a fully observed matrix".into(),
            ));
        }
        let (a, b) = (matrix.alpha(), matrix.beta());
        let clip = |k: f64| k.clamp(0.0, k_j);
        let at = |i, j| clip(matrix.get(i, j).unwrap_or(0.0));
        Ok(BoundaryVector {
            init: (0..a).map(|i| at(i, 0)).collect(),
            inflow: (0..b).map(|j| at(0, (j + 1).min(b - 1))).collect(),
            outflow: (0..b).map(|j| at(a - 1, (j + 1).min(b - 1))).collect(),
        })
    }

    pub fn genome_len(grid: &GridSpec) -> usize {
        grid.alpha() + 2 * grid.beta()
    }

    pub fn from_genome(grid: &GridSpec, genome: &[f64]) -> Result<Self> {
        let (a, b) = (grid.alpha(), grid.beta());
        if genome.len() != a + 2 * b {
            return Err(Error::Shape(format!(
                "boundary genome has {} genes, expected {}",
                genome.len(),
                a + 2 * b
            )));
        }
        Ok(BoundaryVector {
            init: genome[..a].to_vec(),
            inflow: genome[a..a + b].to_vec(),
            outflow: genome[a + b..].to_vec(),
        })
    }

    pub fn to_genome(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.init.len() + self.inflow.len() + self.outflow.len());
        g.extend_from_slice(&self.init);
        g.extend_from_slice(&self.inflow);
        g.extend_from_slice(&self.outflow);
        g
    }

    pub fn validate(&self, grid: &GridSpec, k_j: f64) -> Result<()> {
        if self.init.len() != grid.alpha()
            || self.inflow.len() != grid.beta()
            || self.outflow.len() != grid.beta()
        {
            return Err(Error::Shape(format!(
                "boundary vector sized ({}, {}, {}), grid needs ({}, {}, {})",
                self.init.len(),
                self.inflow.len(),
                self.outflow.len(),
                grid.alpha(),
                grid.beta(),
                grid.beta()
            )));
        }
        let slack = 1e-12 * k_j;
        if let Some(k) = self
            .to_genome()
            .into_iter()
            .find(|k| !(*k >= -slack && *k <= k_j + slack))
        {
            return Err(Error::Domain(format!(
                "boundary density {k} outside [0, k_j = {k_j}]"
            )));
        }
        Ok(())
    }
}
