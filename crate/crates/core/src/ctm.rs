//! Cell Transmission Model forward simulation.
//!
//! Interface `i` sits between cells `i - 1` and `i`. Interface 0 receives
//! from a virtual upstream cell whose density is the step's inflow density,
//! interface `alpha` sends into a virtual downstream cell whose density is
//! the outflow density. Every interface flow goes through [`FdParams::flow`].

use crate::error::{Error, Result};
use crate::fd::FdParams;
use crate::grid::GridSpec;
use crate::matrix::{BoundaryVector, DensityMatrix};

/// Advances one row of densities by `dt`.
///
/// Fails if the fundamental diagram violates the CFL bound for `grid`, if the
/// row length differs from `alpha`, or if any density is outside `[0, k_j]`.
pub fn ctm_step(
    fd: &FdParams,
    grid: &GridSpec,
    row: &[f64],
    inflow_density: f64,
    outflow_density: f64,
) -> Result<Vec<f64>> {
    fd.check_cfl(grid)?;
    if row.len() != grid.alpha() {
        return Err(Error::Shape(format!(
            "row has {} cells, grid has {}",
            row.len(),
            grid.alpha()
        )));
    }
    for &k in row {
        fd.check_density(k, "cell")?;
    }
    fd.check_density(inflow_density, "inflow")?;
    fd.check_density(outflow_density, "outflow")?;
    let mut out = vec![0.0; row.len()];
    step_into(fd, grid.courant_ratio(), row, inflow_density, outflow_density, &mut out);
    Ok(out)
}

/// Runs the CTM over the whole horizon. Column 0 is `bv.init`; column `j + 1`
/// is one step from column `j` with `bv.inflow[j]` and `bv.outflow[j]`.
pub fn ctm_run(fd: &FdParams, grid: &GridSpec, bv: &BoundaryVector) -> Result<DensityMatrix> {
    fd.check_cfl(grid)?;
    bv.validate(grid, fd.k_j())?;
    let mut buf = vec![0.0; grid.alpha() * grid.beta()];
    run_into(fd, grid, &bv.init, &bv.inflow, &bv.outflow, &mut buf);
    let rows: Vec<Vec<f64>> = buf.chunks(grid.beta()).map(<[f64]>::to_vec).collect();
    DensityMatrix::from_rows(*grid, &rows)
}

/// Unclamped update; callers clamp. Exposed to the crate for the CFL
/// property checks.
#[inline]
pub(crate) fn step_raw(
    fd: &FdParams,
    ratio: f64,
    row: &[f64],
    inflow_density: f64,
    outflow_density: f64,
    out: &mut [f64],
) {
    let n = row.len();
    let mut q_in = fd.flow_unchecked(inflow_density, row[0]);
    for i in 0..n {
        let q_out = if i + 1 < n {
            fd.flow_unchecked(row[i], row[i + 1])
        } else {
            fd.flow_unchecked(row[i], outflow_density)
        };
        out[i] = row[i] + ratio * (q_in - q_out);
        q_in = q_out;
    }
}

#[inline]
pub(crate) fn step_into(
    fd: &FdParams,
    ratio: f64,
    row: &[f64],
    inflow_density: f64,
    outflow_density: f64,
    out: &mut [f64],
) {
    step_raw(fd, ratio, row, inflow_density, outflow_density, out);
    let kj = fd.k_j();
    for k in out.iter_mut() {
        *k = k.clamp(0.0, kj);
    }
}

/// Validation-free rollout into a row-major `alpha x beta` buffer. The
/// estimator's fitness loop calls this once per candidate.
pub(crate) fn run_into(
    fd: &FdParams,
    grid: &GridSpec,
    init: &[f64],
    inflow: &[f64],
    outflow: &[f64],
    out: &mut [f64],
) {
    let (alpha, beta) = (grid.alpha(), grid.beta());
    let ratio = grid.courant_ratio();
    let kj = fd.k_j();
    let mut cur: Vec<f64> = init.iter().map(|k| k.clamp(0.0, kj)).collect();
    let mut next = vec![0.0; alpha];
    for (i, &k) in cur.iter().enumerate() {
        out[i * beta] = k;
    }
    for j in 0..beta - 1 {
        let k_in = inflow[j].clamp(0.0, kj);
        let k_out = outflow[j].clamp(0.0, kj);
        step_into(fd, ratio, &cur, k_in, k_out, &mut next);
        for (i, &k) in next.iter().enumerate() {
            out[i * beta + j + 1] = k;
        }
        std::mem::swap(&mut cur, &mut next);
    }
}
